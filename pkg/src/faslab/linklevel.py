"""Uncoded QPSK bit-error rate with maximal-ratio combining over selected antennas.

SNR convention: a grid point ``snr_db`` sets the noise so that the
equal-spaced array with the same number of antennas sees an average
post-combining symbol SNR ``mean_k ||h_k||^2 E_s / sigma^2`` of ``snr_db``
(``E_s = 1``).  Every selection of the same channel is evaluated with that
same noise level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .equalization import combined_gains, equal_spaced
from .rng import make_rng

BER_CONVENTION = (
    "QPSK Gray mapping, E_s=1, MRC w_k=h_k; per-bit error Q(sqrt(rho_k)) with "
    "rho_k=||h_k||^2/sigma^2 (=2 E_b/N0 after combining), averaged over subcarriers; "
    "sigma^2 = mean_k ||h_k,equal||^2 / 10^(snr_db/10)"
)

MIN_MC_SYMBOLS = 1000


@dataclass(frozen=True)
class LinkConfig:
    snr_db_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    symbols_per_point: int = 2000
    modulation: str = field(default="qpsk", init=False)
    combining: str = field(default="mrc", init=False)

    def __post_init__(self):
        object.__setattr__(self, "snr_db_grid", tuple(float(s) for s in self.snr_db_grid))
        if not self.snr_db_grid:
            raise ValueError("snr_db_grid must be nonempty")
        if self.symbols_per_point < 1:
            raise ValueError("symbols_per_point must be positive")


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def noise_variance(G, n_r: int, snr_db: float, reference=None) -> float:
    """Noise power per antenna for a grid point, referenced to the equal-spaced array."""
    G = np.asarray(G)
    ref = equal_spaced(G.shape[0], n_r) if reference is None else np.asarray(reference)
    g_ref = float(np.mean(combined_gains(G, ref)))
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return g_ref / 10 ** (snr_db / 10)


def ber_analytic(G, rows, link: LinkConfig, reference=None) -> np.ndarray:
    """Closed-form average BER per SNR point (see ``BER_CONVENTION``)."""
    rows = np.asarray(rows, dtype=int)
    gains = combined_gains(G, rows)
    out = []
    for snr in link.snr_db_grid:
        var = noise_variance(G, rows.size, snr, reference)
        if var == 0:
            rho = np.where(gains > 0, np.inf, 0.0)
        else:
            rho = gains / var
        out.append(float(np.mean(qfunc(np.sqrt(rho)))))
    return np.array(out)


def ber_monte_carlo(G, rows, link: LinkConfig, rng_seed, reference=None,
                    chunk: int = 256) -> np.ndarray:
    """Simulated BER per SNR point.

    Each point sends ``symbols_per_point`` OFDM symbols (one QPSK symbol per
    subcarrier), adds independent complex Gaussian noise at every selected
    antenna, combines with ``w_k = h_k`` and makes hard decisions.
    """
    if link.symbols_per_point < MIN_MC_SYMBOLS:
        raise ValueError(f"Monte Carlo needs at least {MIN_MC_SYMBOLS} symbols per point")
    G = np.asarray(G)
    rows = np.asarray(rows, dtype=int)
    H = G[rows]                                    # (N_r, K)
    n_r, K = H.shape
    rng = make_rng(rng_seed)
    gain = np.sum(np.abs(H) ** 2, axis=0)          # (K,)
    bers = []
    for snr in link.snr_db_grid:
        sigma = np.sqrt(noise_variance(G, n_r, snr, reference))
        errors = 0
        total = 0
        remaining = link.symbols_per_point
        while remaining > 0:
            n = min(chunk, remaining)
            remaining -= n
            bits = rng.integers(0, 2, size=(n, K, 2))
            x = ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)
            z = (rng.standard_normal((n, n_r, K)) + 1j * rng.standard_normal((n, n_r, K))) / np.sqrt(2)
            # combined output h^H (h x + sigma z) = ||h||^2 x + sigma h^H z
            r = gain[None, :] * x + sigma * np.einsum("ik,nik->nk", np.conj(H), z)
            errors += int(np.count_nonzero((np.real(r) < 0) != (bits[..., 0] == 1)))
            errors += int(np.count_nonzero((np.imag(r) < 0) != (bits[..., 1] == 1)))
            total += 2 * n * K
        bers.append(errors / total)
    return np.array(bers)


def ber_standard_error(ber, n_bits: int) -> np.ndarray:
    """Binomial standard error of a BER estimate from ``n_bits`` bits."""
    ber = np.asarray(ber, dtype=float)
    return np.sqrt(np.maximum(ber * (1 - ber), 0.0) / n_bits)


def bits_per_point(K: int, link: LinkConfig) -> int:
    return 2 * K * link.symbols_per_point
