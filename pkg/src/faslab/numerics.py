"""Shared numerical kernels: truncated least squares, spectral norm, unitary DFT."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_REL_TOL = 1e-10


@dataclass(frozen=True)
class LeastSquaresResult:
    coefficients: np.ndarray
    residual_norm: float
    effective_rank: int


def least_squares(A, b, rel_tol: float = DEFAULT_REL_TOL) -> LeastSquaresResult:
    """Minimum-norm solution of ``min ||A x - b||`` with SVD truncation.

    Singular values below ``rel_tol * sigma_max`` are treated as zero.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if A.shape[1] == 0:
        return LeastSquaresResult(np.zeros(0, dtype=complex), float(np.linalg.norm(b)), 0)
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=rel_tol)
    r = b - A @ x
    return LeastSquaresResult(x, float(np.linalg.norm(r)), int(rank))


def _power(G, v, iters, tol):
    lam = np.zeros(G.shape[:-2])
    for _ in range(iters):
        w = G @ v
        nrm = np.linalg.norm(w, axis=-2, keepdims=True)
        new_lam = nrm[..., 0, 0]
        v = w / np.where(nrm == 0, 1.0, nrm)
        converged = np.all(np.abs(new_lam - lam) <= tol * np.maximum(new_lam, 1e-300))
        lam = new_lam
        if converged:
            break
    # Rayleigh quotient is a sharper estimate than the last norm ratio
    rq = np.real(np.conj(np.swapaxes(v, -1, -2)) @ G @ v)[..., 0, 0]
    return np.maximum(rq, lam)


def spectral_norm(A, iters: int = 200, tol: float = 1e-8) -> float | np.ndarray:
    """Largest singular value by power iteration on ``A^H A``.

    Accepts a single matrix or a stack ``(..., m, n)``.  Starts are
    deterministic: the all-ones vector, then the largest column of ``A^H A``
    (which catches an all-ones start that is itself a minor eigenvector);
    the larger estimate wins.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] == 0 or A.shape[-2] == 0:
        raise ValueError("spectral_norm needs a nonempty matrix")
    AH = np.conj(np.swapaxes(A, -1, -2))
    G = AH @ A
    ones = np.ones(A.shape[:-2] + (A.shape[-1], 1), dtype=G.dtype) / np.sqrt(A.shape[-1])
    col_norms = np.linalg.norm(G, axis=-2)
    best_col = np.take_along_axis(G, np.argmax(col_norms, axis=-1)[..., None, None], axis=-1)
    nrm = np.linalg.norm(best_col, axis=-2, keepdims=True)
    best_col = np.where(nrm == 0, ones, best_col / np.where(nrm == 0, 1.0, nrm))
    lam = np.maximum(_power(G, ones, iters, tol), _power(G, best_col, iters, tol))
    sigma = np.sqrt(np.maximum(lam, 0.0))
    return float(sigma) if sigma.ndim == 0 else sigma


def dft_unitary(x, direction: str = "forward", axis: int = -1) -> np.ndarray:
    """Unitary DFT with ``1/sqrt(K)`` scaling.

    ``"forward"`` uses the ``exp(-2j*pi*n*k/K)`` kernel, ``"inverse"`` its
    adjoint; each is the exact inverse of the other.
    """
    if direction == "forward":
        return np.fft.fft(x, axis=axis, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(x, axis=axis, norm="ortho")
    raise ValueError("direction must be 'forward' or 'inverse'")
