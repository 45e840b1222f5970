"""Wideband multipath channel model and the space-frequency grid.

All frequencies are stored in Hz on :class:`SystemConfig` and converted to
angular units once, through the ``omega_*`` properties.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .rng import make_rng

SPEED_OF_LIGHT = 2.99792458e8


def sinc(x):
    """Unnormalized sinc, ``sin(x)/x`` with ``sinc(0) = 1``."""
    return np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True)
class SystemConfig:
    """Physical and grid parameters of a wideband fluid-antenna receiver.

    Parameters
    ----------
    M : int
        Number of spatial grid points along the aperture.
    K : int
        Number of frequency grid points across the band.
    aperture_wavelengths : float
        Aperture size in carrier wavelengths.
    bandwidth_hz, carrier_hz : float
        Signal bandwidth and carrier frequency in Hz.
    tau_max_s : float
        Maximal delay spread of the channel in seconds.
    c : float
        Propagation speed in m/s.
    """

    M: int = 128
    K: int = 128
    aperture_wavelengths: float = 10.0
    bandwidth_hz: float = 200e6
    carrier_hz: float = 5.8e9
    tau_max_s: float = 2e-7
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if int(self.M) != self.M or int(self.K) != self.K:
            raise ValueError("M and K must be integers")
        if self.M < 2 or self.K < 2:
            raise ValueError("M and K must be at least 2")
        for name in ("aperture_wavelengths", "bandwidth_hz", "carrier_hz", "tau_max_s", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.bandwidth_hz < 2 * self.carrier_hz:
            raise ValueError("bandwidth_hz must be below 2*carrier_hz")

    @property
    def wavelength(self) -> float:
        return self.c / self.carrier_hz

    @property
    def aperture(self) -> float:
        """Aperture length W in meters."""
        return self.aperture_wavelengths * self.wavelength

    @property
    def beta(self) -> float:
        return self.bandwidth_hz / self.carrier_hz

    @property
    def omega_c(self) -> float:
        return 2 * np.pi * self.carrier_hz

    @property
    def omega_b(self) -> float:
        """Angular bandwidth B."""
        return 2 * np.pi * self.bandwidth_hz

    @property
    def omegas(self) -> np.ndarray:
        """Baseband angular frequencies ``(k/K - 1/2) B`` for ``k = 1..K``."""
        k = np.arange(1, self.K + 1)
        return (k / self.K - 0.5) * self.omega_b

    @property
    def positions(self) -> np.ndarray:
        """Antenna positions ``(m-1) W / M`` for ``m = 1..M``."""
        return np.arange(self.M) * self.aperture / self.M

    @property
    def delta_tau(self) -> float:
        """Delay resolution of the grid, ``2*pi/B``."""
        return 2 * np.pi / self.omega_b

    @property
    def delta_k(self) -> float:
        """Wavenumber resolution of the grid, ``2/M``."""
        return 2.0 / self.M

    def replace(self, **changes) -> "SystemConfig":
        values = asdict(self)
        values.update(changes)
        return SystemConfig(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _complex_pairs(z) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(z, dtype=complex)]


def _from_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


@dataclass(frozen=True, eq=False)
class PathSet:
    """Multipath parameters: complex gains, angles of arrival and delays."""

    alphas: np.ndarray
    thetas: np.ndarray
    taus: np.ndarray

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=complex))
        thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        taus = np.atleast_1d(np.asarray(self.taus, dtype=float))
        if not (alphas.shape == thetas.shape == taus.shape) or alphas.ndim != 1:
            raise ValueError("alphas, thetas and taus must be 1-D arrays of equal length")
        if alphas.size < 1:
            raise ValueError("a PathSet needs at least one path")
        if np.any(thetas < 0) or np.any(thetas > np.pi):
            raise ValueError("thetas must lie in [0, pi]")
        if np.any(taus < 0):
            raise ValueError("taus must be nonnegative")
        for name, arr in (("alphas", alphas), ("thetas", thetas), ("taus", taus)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.alphas.size

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.cos(self.thetas)

    def to_dict(self) -> dict:
        return {
            "alphas": _complex_pairs(self.alphas),
            "thetas": self.thetas.tolist(),
            "taus": self.taus.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PathSet":
        return cls(_from_pairs(data["alphas"]), data["thetas"], data["taus"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PathSet":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SpaceFrequencyGrid:
    """The complex ``M x K`` channel matrix G (rows: positions, columns: subcarriers)."""

    entries: np.ndarray
    config: SystemConfig = field(repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (self.config.M, self.config.K):
            raise ValueError(f"grid shape {entries.shape} does not match config")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def vec(self) -> np.ndarray:
        """Column-major vectorization, matching ``vec(G)``."""
        return self.entries.reshape(-1, order="F")

    @property
    def power(self) -> np.ndarray:
        """Entry-wise power ``|G|^2``."""
        return np.abs(self.entries) ** 2


def draw_paths(config: SystemConfig, L: int, rng_seed) -> PathSet:
    """Draw ``L`` i.i.d. paths: CN(0,1) gains, uniform angles and delays."""
    if L < 1:
        raise ValueError("L must be at least 1")
    rng = make_rng(rng_seed)
    alphas = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2)
    # uniform on (0, pi]: reflect the half-open [0, pi) draw
    thetas = np.pi - rng.uniform(0.0, np.pi, L)
    taus = rng.uniform(0.0, config.tau_max_s, L)
    return PathSet(alphas, thetas, taus)


def synthesize_sfg(config: SystemConfig, paths: PathSet) -> SpaceFrequencyGrid:
    """Evaluate the multipath response on the position x frequency grid."""
    wave = (config.omegas + config.omega_c) / config.c          # (K,)
    r = config.positions                                         # (M,)
    # phase[l, m, k] = wave_k * (r_m cos(theta_l) + c tau_l)
    spatial = np.exp(1j * np.outer(paths.wavenumbers, r)[:, :, None] * wave[None, None, :])
    delay = np.exp(1j * np.outer(paths.taus * config.c, wave))  # (L, K)
    G = np.einsum("l,lmk,lk->mk", paths.alphas, spatial, delay)
    return SpaceFrequencyGrid(G, config)


def leakage_pattern(config: SystemConfig, k_path, tau_path, wavenumbers, delays) -> np.ndarray:
    """Separable sinc leakage of one path evaluated on a (wavenumber, delay) mesh."""
    W, B, wc, c = config.aperture, config.omega_b, config.omega_c, config.c
    kk = np.asarray(wavenumbers, dtype=float)[:, None]
    tt = np.asarray(delays, dtype=float)[None, :]
    return sinc(W * (2 * wc - B) * (k_path - kk) / (4 * c)) * sinc(B * (tau_path - tt) / 2)


def sparse_domain_synthesis(config: SystemConfig, paths: PathSet, delta_k=None, delta_tau=None,
                            wavenumbers=None, delays=None) -> np.ndarray:
    """Delay-wavenumber image of the channel, shape ``(len(wavenumbers), len(delays))``.

    The mesh is either given explicitly or built from resolutions (defaulting
    to ``2/M`` and ``2*pi/B``): wavenumbers cover ``[-1, 1)`` and delays cover
    ``[0, K * delta_tau)``.
    """
    if wavenumbers is None:
        dk = config.delta_k if delta_k is None else float(delta_k)
        if dk <= 0:
            raise ValueError("delta_k must be positive")
        wavenumbers = -1.0 + dk * np.arange(int(np.ceil(2.0 / dk - 1e-12)))
    if delays is None:
        dt = config.delta_tau if delta_tau is None else float(delta_tau)
        if dt <= 0:
            raise ValueError("delta_tau must be positive")
        delays = dt * np.arange(config.K)
    wavenumbers = np.asarray(wavenumbers, dtype=float)
    delays = np.asarray(delays, dtype=float)
    scale = config.aperture * config.omega_b
    out = np.zeros((wavenumbers.size, delays.size), dtype=complex)
    for alpha, k_l, tau_l in zip(paths.alphas, paths.wavenumbers, paths.taus):
        phase = np.exp(1j * config.omega_c * (tau_l - delays))[None, :]
        out += alpha * phase * leakage_pattern(config, k_l, tau_l, wavenumbers, delays)
    return scale * out
