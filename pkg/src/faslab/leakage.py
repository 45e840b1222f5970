"""Leakage coefficients: how far a single path spreads over the delay-wavenumber grid.

Frequencies ``B`` and ``omega_c`` are angular.  The two one-dimensional
coefficients count grid cells inside the full width of the rectangle that
relaxes the hyperbolic leakage support; their product is the group size used
by the group-sparse solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemConfig


def power_threshold(noise_var: float) -> float:
    """Leakage detection threshold: half power for weak noise, else the noise power."""
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    return 0.5 if noise_var < 0.5 else float(noise_var)


def gamma_tau(K: int, tau_max: float, B: float, T: float) -> float:
    """Leakage coefficient along delay, ``4K / (tau_max B sqrt(T))``."""
    if min(K, tau_max, B, T) <= 0:
        raise ValueError("all arguments must be positive")
    return 4.0 * K / (tau_max * B * np.sqrt(T))


def gamma_wavenumber(M: int, n_lambda: float, beta: float, T: float) -> float:
    """Leakage coefficient along wavenumber, ``2M / (pi sqrt(T) N_lambda (2 - beta))``."""
    if not 0 < beta < 2:
        raise ValueError("beta must lie in (0, 2)")
    if min(M, n_lambda, T) <= 0:
        raise ValueError("all arguments must be positive")
    return 2.0 * M / (np.pi * np.sqrt(T) * n_lambda * (2.0 - beta))


def delay_halfwidth(B: float, T: float) -> float:
    """Largest ``|tau_l - tau|`` inside the delay leakage support."""
    return 2.0 / (B * np.sqrt(T))


def wavenumber_halfwidth(W: float, omega_c: float, B: float, T: float, c: float) -> float:
    """Largest ``|k_l - k|`` inside the wavenumber leakage support."""
    return 4.0 * c / (W * np.sqrt(T) * (2 * omega_c - B))


def lemma1_bound(B: float, W: float, omega_c: float, delta_tau: float, delta_k: float, T: float,
                 c: float = 2.99792458e8) -> float:
    """Upper bound on the number of grid cells in the leakage region.

    ``32 c / (delta_tau delta_k T B W (2 omega_c - B))``: the area of the
    rectangular support divided by the cell area.
    """
    if min(B, W, omega_c, delta_tau, delta_k, T) <= 0:
        raise ValueError("all arguments must be positive")
    if not B < 2 * omega_c:
        raise ValueError("B must be below 2*omega_c")
    return 32.0 * c / (delta_tau * delta_k * T * B * W * (2 * omega_c - B))


def envelope(config: SystemConfig, dk, dtau) -> np.ndarray:
    """Amplitude envelope ``8c / (W B (2w_c - B) |dk| |dtau|)``; infinite on the axes."""
    W, B, wc, c = config.aperture, config.omega_b, config.omega_c, config.c
    denom = W * B * (2 * wc - B) * np.abs(dk) * np.abs(dtau)
    with np.errstate(divide="ignore"):
        return np.where(denom == 0, np.inf, 8 * c / np.where(denom == 0, 1.0, denom))


def empirical_leakage_count(config: SystemConfig, k_path: float, tau_path: float,
                            wavenumbers, delays, T: float, region: str = "rectangle") -> int:
    """Count grid points of one path's leakage support.

    ``region="rectangle"`` counts points inside both one-dimensional supports
    (the relaxation the closed-form bounds describe); ``"hyperbola"`` counts
    points whose squared envelope reaches ``T``, which includes the whole row
    and column through the path whenever they lie on the grid.
    """
    dk = np.asarray(wavenumbers, dtype=float)[:, None] - k_path
    dt = np.asarray(delays, dtype=float)[None, :] - tau_path
    if region == "rectangle":
        hk = wavenumber_halfwidth(config.aperture, config.omega_c, config.omega_b, T, config.c)
        ht = delay_halfwidth(config.omega_b, T)
        inside = (np.abs(dk) <= hk) & (np.abs(dt) <= ht)
    elif region == "hyperbola":
        inside = envelope(config, dk, dt) ** 2 >= T
    else:
        raise ValueError("region must be 'rectangle' or 'hyperbola'")
    return int(np.count_nonzero(inside))


@dataclass(frozen=True)
class LeakageParams:
    """Threshold, leakage coefficients and the integer group size for a configuration."""

    threshold: float
    gamma_tau: float
    gamma_k: float
    gamma: int
    delta_tau: float
    delta_k: float

    @classmethod
    def from_config(cls, config: SystemConfig, noise_var: float = 0.0, threshold: float | None = None,
                    gamma_override: int | None = None) -> "LeakageParams":
        T = power_threshold(noise_var) if threshold is None else float(threshold)
        g_tau = gamma_tau(config.K, config.tau_max_s, config.omega_b, T)
        g_k = gamma_wavenumber(config.M, config.aperture_wavelengths, config.beta, T)
        if gamma_override is not None:
            gamma = int(gamma_override)
        else:
            # a factor below one means that domain does not leak
            gamma = max(1, int(np.floor(max(1.0, g_tau) * max(1.0, g_k) + 0.5)))
        if gamma < 1:
            raise ValueError("gamma must be at least 1")
        return cls(T, g_tau, g_k, gamma, config.tau_max_s / config.K, 2.0 / config.M)

    @property
    def block_shape(self) -> tuple[int, int]:
        """(wavenumber, tap) extent of a rectangular group of ``gamma`` cells."""
        return factor_block(self.gamma, max(1.0, self.gamma_k) / max(1.0, self.gamma_tau))


def factor_block(gamma: int, aspect: float = 1.0) -> tuple[int, int]:
    """Split ``gamma`` into ``rows * cols`` with ``rows/cols`` closest to ``aspect``."""
    best = (gamma, 1)
    best_err = np.inf
    for cols in range(1, gamma + 1):
        if gamma % cols:
            continue
        rows = gamma // cols
        err = abs(np.log(rows / cols) - np.log(aspect))
        if err < best_err - 1e-12:
            best, best_err = (rows, cols), err
    return best
