"""Matrix-free dictionary and measurement operators.

The sparse coefficient vector ``x`` is ``vec`` of an ``M x K`` matrix whose
rows index the uniform wavenumber grid and whose columns index delay taps.
The dictionary maps it to the space-frequency grid::

    g = D x,   D = Omega Psi,
    Psi: right-multiplication by the unitary DFT F (delay -> frequency),
    Omega = blkdiag(A(w_1), ..., A(w_K)),

and the measurement operator keeps the sampled antennas and pilot subcarriers
(pilot symbols applied after ``D``).  Indices are 0-based throughout; column
``i`` of ``D`` corresponds to wavenumber ``i % M`` and tap ``i // M``.

``F[t, k] = exp(+2j*pi*t*k/K)/sqrt(K)`` so that tap ``t`` corresponds to a
physical delay of ``t * 2*pi/B``.
"""
from __future__ import annotations

import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .model import SystemConfig, SpaceFrequencyGrid
from .rng import make_rng


def wavenumber_grid(M: int) -> np.ndarray:
    """Uniform half-open wavenumber grid ``-1 + 2q/M``, ``q = 0..M-1``."""
    return -1.0 + 2.0 * np.arange(M) / M


def manifold_phase_step(config: SystemConfig, omega) -> np.ndarray:
    """Per-element phase slope ``W (omega + omega_c) / (c M)`` of the array manifold."""
    return config.aperture * (np.asarray(omega, dtype=float) + config.omega_c) / (config.c * config.M)


def manifold_vector(config: SystemConfig, k: float, omega: float) -> np.ndarray:
    """Frequency-dependent array manifold ``a(k; omega)`` of length M."""
    m = np.arange(config.M)
    return np.exp(1j * m * manifold_phase_step(config, omega) * k)


def manifold_matrix(config: SystemConfig, omega: float) -> np.ndarray:
    """``A(omega)``: manifold vectors over the wavenumber grid as columns."""
    m = np.arange(config.M)[:, None]
    return np.exp(1j * m * manifold_phase_step(config, omega) * wavenumber_grid(config.M)[None, :])


def _check_sorted_unique(idx: np.ndarray, upper: int, name: str) -> None:
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D index array")
    if np.any(np.diff(idx) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= upper:
        raise ValueError(f"{name} out of range [0, {upper})")


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Sampled antenna positions, pilot subcarriers and pilot symbols (0-based)."""

    antenna_indices: np.ndarray
    pilot_indices: np.ndarray
    pilot_symbols: np.ndarray | None = None

    def __post_init__(self):
        ant = np.asarray(self.antenna_indices, dtype=int)
        pil = np.asarray(self.pilot_indices, dtype=int)
        sym = np.ones(pil.size, dtype=complex) if self.pilot_symbols is None \
            else np.asarray(self.pilot_symbols, dtype=complex)
        if sym.shape != pil.shape:
            raise ValueError("one pilot symbol per pilot index is required")
        if np.any(np.abs(sym) == 0):
            raise ValueError("pilot symbols must be nonzero")
        for name, arr in (("antenna_indices", ant), ("pilot_indices", pil), ("pilot_symbols", sym)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_r(self) -> int:
        return self.antenna_indices.size

    @property
    def n_p(self) -> int:
        return self.pilot_indices.size

    def validate(self, config: SystemConfig) -> None:
        _check_sorted_unique(self.antenna_indices, config.M, "antenna_indices")
        _check_sorted_unique(self.pilot_indices, config.K, "pilot_indices")

    @classmethod
    def uniform(cls, config: SystemConfig, n_r: int, n_p: int, pilot_symbols=None) -> "SamplingPlan":
        """Evenly spread antennas and pilots across the grid."""
        from .equalization import equal_spaced
        return cls(equal_spaced(config.M, n_r), equal_spaced(config.K, n_p), pilot_symbols)

    @classmethod
    def random(cls, config: SystemConfig, n_r: int, n_p: int, rng_seed) -> "SamplingPlan":
        rng = make_rng(rng_seed)
        ant = np.sort(rng.choice(config.M, n_r, replace=False))
        pil = np.sort(rng.choice(config.K, n_p, replace=False))
        return cls(ant, pil)

    def to_dict(self) -> dict:
        return {
            "antenna_indices": self.antenna_indices.tolist(),
            "pilot_indices": self.pilot_indices.tolist(),
            "pilot_symbols": [[float(z.real), float(z.imag)] for z in self.pilot_symbols],
        }


class _ColumnCache:
    """Thread-safe LRU store of measurement-operator columns."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._data: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_many(self, keys):
        found = {}
        with self._lock:
            for k in keys:
                col = self._data.get(k)
                if col is not None:
                    self._data.move_to_end(k)
                    found[k] = col
            self.hits += len(found)
            self.misses += len(keys) - len(found)
        return found

    def put_many(self, items) -> None:
        if self.capacity <= 0:
            return
        with self._lock:
            for k, col in items:
                self._data[k] = col
                self._data.move_to_end(k)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def __len__(self) -> int:
        return len(self._data)


class Dictionary:
    """The full ``MK x MK`` dictionary ``D = Omega Psi`` with per-frequency manifold tables."""

    def __init__(self, config: SystemConfig):
        self.config = config
        M, K = config.M, config.K
        phase = manifold_phase_step(config, config.omegas)                  # (K,)
        grid = wavenumber_grid(M)
        m = np.arange(M)
        self._A = np.exp(1j * phase[:, None, None] * m[None, :, None] * grid[None, None, :])  # (K, M, M)
        self._A.setflags(write=False)
        self.shape = (M * K, M * K)

    def manifold(self, k: int) -> np.ndarray:
        return self._A[k]

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.shape[1],):
            raise ValueError(f"expected vector of length {self.shape[1]}, got {v.shape}")
        return v

    def apply(self, x) -> np.ndarray:
        """``g = D x``: DFT along delay, then per-frequency manifold."""
        M, K = self.config.M, self.config.K
        X = self._check(x).reshape(M, K, order="F")
        Xf = np.fft.ifft(X, axis=1, norm="ortho")
        G = np.einsum("kmq,qk->mk", self._A, Xf)
        return G.reshape(-1, order="F")

    def adjoint(self, g) -> np.ndarray:
        """``x = D^H g``."""
        M, K = self.config.M, self.config.K
        G = self._check(g).reshape(M, K, order="F")
        Xf = np.einsum("kmq,mk->qk", np.conj(self._A), G)
        X = np.fft.fft(Xf, axis=1, norm="ortho")
        return X.reshape(-1, order="F")

    def frame_bounds_estimate(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of ``D D^H``.

        ``D D^H`` is block diagonal with blocks ``A(w_k) A(w_k)^H``; a tight
        frame would give equal bounds.
        """
        eig = np.linalg.eigvalsh(self._A @ np.conj(np.swapaxes(self._A, 1, 2)))
        return float(eig.min()), float(eig.max())

    def to_dense(self) -> np.ndarray:
        M, K = self.config.M, self.config.K
        F = np.fft.ifft(np.eye(K), axis=0, norm="ortho")                      # F[t, k]
        out = np.zeros((M * K, M * K), dtype=complex)
        for k in range(K):
            # rows (m, k); columns (q, t) -> A[k][m, q] * F[t, k]
            block = self._A[k][:, :, None] * F[None, None, :, k]               # (M, M_q, K_t)
            out[k * M:(k + 1) * M, :] = block.reshape(M, M * K, order="F")
        return out


class MeasurementOperator:
    """``M = S D``: sampled antennas and pilots of the dictionary output.

    The operator is immutable; the column cache is internally locked so one
    instance can be shared across threads.
    """

    def __init__(self, config: SystemConfig, plan: SamplingPlan, cache_capacity: int | None = None,
                 gamma: int = 8, L: int = 40):
        plan.validate(config)
        self.config = config
        self.plan = plan
        M, K = config.M, config.K
        self.shape = (plan.n_r * plan.n_p, M * K)
        omegas = config.omegas[plan.pilot_indices]
        phase = manifold_phase_step(config, omegas)                                # (N_p,)
        grid = wavenumber_grid(M)
        ant = plan.antenna_indices.astype(float)
        # sampled manifold rows for each pilot: (N_p, N_r, M)
        self._A = np.exp(1j * phase[:, None, None] * ant[None, :, None] * grid[None, None, :])
        # DFT entries F[t, k_p] for the pilot subcarriers: (K, N_p)
        t = np.arange(K)[:, None]
        self._F = np.exp(2j * np.pi * t * plan.pilot_indices[None, :] / K) / np.sqrt(K)
        self._s = plan.pilot_symbols
        for arr in (self._A, self._F):
            arr.setflags(write=False)
        capacity = 4 * gamma * L if cache_capacity is None else cache_capacity
        self._cache = _ColumnCache(capacity)
        self._col_norms = None

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.shape[1],):
            raise ValueError(f"expected vector of length {self.shape[1]}, got {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        M, K = self.config.M, self.config.K
        X = self._check_x(x).reshape(M, K, order="F")
        Xp = X @ self._F                                                  # (M, N_p)
        Y = np.einsum("pnq,qp->np", self._A, Xp) * self._s[None, :]
        return Y.reshape(-1, order="F")

    def adjoint(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (self.shape[0],):
            raise ValueError(f"expected vector of length {self.shape[0]}, got {y.shape}")
        Y = y.reshape(self.plan.n_r, self.plan.n_p, order="F") * np.conj(self._s)[None, :]
        U = np.einsum("pnq,np->qp", np.conj(self._A), Y)                  # (M, N_p)
        X = U @ np.conj(self._F).T                                        # (M, K)
        return X.reshape(-1, order="F")

    def _compute_columns(self, idx: np.ndarray) -> np.ndarray:
        M = self.config.M
        q, t = idx % M, idx // M
        # entry (n, p) of column (q, t): A_p[n, q] * F[t, p] * s_p
        cols = self._A[:, :, q] * (self._F[t, :].T * self._s[:, None])[:, None, :]   # (N_p, N_r, T)
        return cols.reshape(self.shape[0], idx.size)

    def extract_columns(self, T) -> np.ndarray:
        """Columns of ``M`` indexed by ``T`` as an ``(N_r N_p, |T|)`` matrix."""
        idx = np.atleast_1d(np.asarray(T, dtype=int))
        if idx.size and (idx.min() < 0 or idx.max() >= self.shape[1]):
            raise IndexError("column index out of range")
        if idx.size == 0:
            return np.zeros((self.shape[0], 0), dtype=complex)
        keys = idx.tolist()
        found = self._cache.get_many(keys)
        missing = np.array(sorted({k for k in keys if k not in found}), dtype=int)
        if missing.size:
            fresh = self._compute_columns(missing)
            new = {int(k): fresh[:, j] for j, k in enumerate(missing)}
            self._cache.put_many(new.items())
            found.update(new)
        return np.stack([found[k] for k in keys], axis=1)

    def column_norms(self) -> np.ndarray:
        """Euclidean norm of every column (computed once)."""
        if self._col_norms is None:
            # |A| = 1, so the column norm depends only on the tap through F and on the pilots
            per_tap = np.sqrt(self.plan.n_r * (np.abs(self._F * self._s[None, :]) ** 2).sum(axis=1))   # (K,)
            self._col_norms = np.repeat(per_tap, self.config.M)
        return self._col_norms

    def gram_blocks(self) -> list[np.ndarray]:
        """``M M^H`` is block diagonal over pilots; returns the ``N_r x N_r`` blocks."""
        blocks = []
        for p in range(self.plan.n_p):
            A = self._A[p] * self._s[p]
            blocks.append(A @ np.conj(A).T)
        return blocks

    def to_dense(self) -> np.ndarray:
        return self._compute_columns(np.arange(self.shape[1]))

    @property
    def cache(self) -> _ColumnCache:
        return self._cache


@dataclass(frozen=True, eq=False)
class Observation:
    """Vectorized (column-major ``N_r x N_p``) noisy samples of the grid."""

    y0: np.ndarray
    noise_sigma: float
    plan: SamplingPlan = field(repr=False)

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=complex)
        if y0.shape != (self.plan.n_r * self.plan.n_p,):
            raise ValueError("observation length does not match the sampling plan")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        y0.setflags(write=False)
        object.__setattr__(self, "y0", y0)

    @property
    def matrix(self) -> np.ndarray:
        return self.y0.reshape(self.plan.n_r, self.plan.n_p, order="F")


def sampled_grid(sfg: SpaceFrequencyGrid, plan: SamplingPlan) -> np.ndarray:
    """``S_r G S_p^T`` (pilot-scaled) as an ``N_r x N_p`` matrix."""
    plan.validate(sfg.config)
    sub = sfg.entries[np.ix_(plan.antenna_indices, plan.pilot_indices)]
    return sub * plan.pilot_symbols[None, :]


def noise_sigma_for_snr(sfg: SpaceFrequencyGrid, plan: SamplingPlan, snr_db: float) -> float:
    """Noise standard deviation giving the requested SNR on the sampled entries."""
    power = np.mean(np.abs(sampled_grid(sfg, plan)) ** 2)
    return float(np.sqrt(power / 10 ** (snr_db / 10)))


def observe(sfg: SpaceFrequencyGrid, plan: SamplingPlan, noise_sigma: float, rng_seed) -> Observation:
    """Sample the grid and add circular complex Gaussian noise of per-entry variance ``sigma^2``."""
    clean = sampled_grid(sfg, plan)
    rng = make_rng(rng_seed)
    noise = (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)) / np.sqrt(2)
    Y = clean + noise_sigma * noise
    return Observation(Y.reshape(-1, order="F"), float(noise_sigma), plan)


def dump_dense(matrix: np.ndarray, path) -> None:
    """Write a dense complex matrix as JSON with a shape header (debugging aid)."""
    matrix = np.asarray(matrix)
    payload = {
        "shape": list(matrix.shape),
        "re": np.real(matrix).ravel().tolist(),
        "im": np.imag(matrix).ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_dense(path) -> np.ndarray:
    with open(path) as fh:
        payload = json.load(fh)
    re = np.asarray(payload["re"], dtype=float)
    im = np.asarray(payload["im"], dtype=float)
    return (re + 1j * im).reshape(payload["shape"])
