"""Greedy recovery of the space-frequency grid from compressed observations.

Solvers share one loop: correlate the residual with the (column-normalized)
measurement operator, grow the support, re-fit the coefficients on the
support by least squares, and stop once the residual drops to ``eps`` or the
iteration budget is spent.  They differ only in how the new indices are
chosen:

* ``dc_gomp``  - the ``gamma`` largest correlation magnitudes, anywhere;
* ``omp``      - the single largest;
* ``gomp_uniform`` - the whole predefined block with the largest correlation energy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .numerics import least_squares, spectral_norm
from .operators import Dictionary, MeasurementOperator


@dataclass
class RecoveryState:
    support: list = field(default_factory=list)
    residual: np.ndarray | None = None
    iteration: int = 0
    residual_history: list = field(default_factory=list)
    support_saturated: bool = False


@dataclass
class RecoverySolution:
    g_hat: np.ndarray
    x_hat: np.ndarray
    state: RecoveryState
    shape: tuple
    relative_error: float | None = None
    method: str = ""

    @property
    def grid(self) -> np.ndarray:
        return self.g_hat.reshape(self.shape, order="F")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "support": [int(i) for i in self.state.support],
            "iterations": self.state.iteration,
            "residual_history": [float(r) for r in self.state.residual_history],
            "support_saturated": self.state.support_saturated,
            "relative_error": None if self.relative_error is None else float(self.relative_error),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_grid_csv(self, path, domain: str = "space") -> None:
        """Dump the recovered grid (``space``) or sparse coefficients (``sparse``) as ``re,im`` cells."""
        data = self.grid if domain == "space" else self.x_hat.reshape(self.shape, order="F")
        write_complex_csv(data, path)


def write_complex_csv(matrix, path) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(f'"{float(z.real)!r},{float(z.imag)!r}"' for z in row) + "\n")


def relative_error(G_hat, G) -> float:
    """Distance between the Frobenius-normalized estimate and truth (0 to 2)."""
    G_hat = np.asarray(G_hat)
    G = np.asarray(G)
    if G_hat.shape != G.shape:
        raise ValueError("shape mismatch")
    n_hat, n = np.linalg.norm(G_hat), np.linalg.norm(G)
    if n_hat == 0 or n == 0:
        raise ValueError("relative error is undefined for a zero matrix")
    return float(np.linalg.norm(G_hat / n_hat - G / n))


def default_epsilon(op: MeasurementOperator, noise_sigma: float) -> float:
    """Expected noise norm ``sqrt(N_r N_p) sigma``."""
    return float(np.sqrt(op.shape[0]) * noise_sigma)


def _top_indices(score: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest scores; ties go to the lower index."""
    count = min(count, score.size)
    order = np.lexsort((np.arange(score.size), -score))
    return order[:count]


def _pursuit(op: MeasurementOperator, y0, select, eps: float, n_iter: int, method: str,
             truth=None, dictionary: Dictionary | None = None) -> RecoverySolution:
    y0 = np.asarray(y0, dtype=complex)
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    n_rows, n_cols = op.shape
    norms = op.column_norms()
    norms = np.where(norms == 0, 1.0, norms)
    state = RecoveryState(residual=y0.copy())
    state.residual_history.append(float(np.linalg.norm(y0)))
    selected = np.zeros(n_cols, dtype=bool)
    coef = np.zeros(0, dtype=complex)

    while state.residual_history[-1] > eps and state.iteration < n_iter:
        q = np.abs(op.adjoint(state.residual)) / norms
        q[selected] = -np.inf
        new = select(q, selected)
        if len(state.support) + len(new) > n_rows or len(new) == 0:
            state.support_saturated = True
            break
        selected[new] = True
        state.support.extend(int(i) for i in new)
        state.iteration += 1
        A = op.extract_columns(state.support)
        ls = least_squares(A, y0)
        coef = ls.coefficients
        state.residual = y0 - A @ coef
        state.residual_history.append(float(np.linalg.norm(state.residual)))

    x_hat = np.zeros(n_cols, dtype=complex)
    if state.support:
        x_hat[np.asarray(state.support)] = coef
    D = dictionary if dictionary is not None else Dictionary(op.config)
    g_hat = D.apply(x_hat)
    shape = (op.config.M, op.config.K)
    sol = RecoverySolution(g_hat, x_hat, state, shape, method=method)
    if truth is not None:
        sol.relative_error = relative_error(sol.grid, truth)
    return sol


def dc_gomp(op: MeasurementOperator, y0, gamma: int, eps: float, n_iter: int, truth=None,
            dictionary: Dictionary | None = None) -> RecoverySolution:
    """Descending-correlation group OMP: add the ``gamma`` strongest unselected atoms per step."""
    if gamma < 1:
        raise ValueError("gamma must be at least 1")

    def select(q, selected):
        avail = int(np.count_nonzero(~selected))
        return _top_indices(q, min(gamma, avail))

    return _pursuit(op, y0, select, eps, n_iter, "dc-gomp" if gamma > 1 else "omp", truth, dictionary)


def omp(op: MeasurementOperator, y0, eps: float, n_iter: int, truth=None,
        dictionary: Dictionary | None = None) -> RecoverySolution:
    """Orthogonal matching pursuit (one atom per iteration)."""
    return dc_gomp(op, y0, 1, eps, n_iter, truth, dictionary)


def rectangle_partition(M: int, K: int, block: tuple[int, int]) -> list[np.ndarray]:
    """Tile the ``M x K`` coefficient grid into ``block`` rectangles (edge tiles may be smaller).

    Returns groups of flat column indices ``q + M t``.
    """
    bk, bt = block
    if bk < 1 or bt < 1:
        raise ValueError("block sides must be positive")
    groups = []
    for t0 in range(0, K, bt):
        for q0 in range(0, M, bk):
            q = np.arange(q0, min(q0 + bk, M))
            t = np.arange(t0, min(t0 + bt, K))
            groups.append((q[:, None] + M * t[None, :]).ravel(order="F"))
    return groups


def _group_labels(groups, n_cols: int) -> np.ndarray:
    labels = np.full(n_cols, -1, dtype=int)
    for j, g in enumerate(groups):
        if np.any(labels[g] >= 0):
            raise ValueError("groups overlap")
        labels[g] = j
    if np.any(labels < 0):
        raise ValueError("groups do not cover every column")
    return labels


def gomp_uniform(op: MeasurementOperator, y0, gamma: int, eps: float, n_iter: int, partition=None,
                 truth=None, dictionary: Dictionary | None = None) -> RecoverySolution:
    """Group OMP over a fixed partition: add the block with the largest correlation energy."""
    M, K = op.config.M, op.config.K
    if partition is None:
        from .leakage import factor_block
        partition = rectangle_partition(M, K, factor_block(gamma, 2.0))
    groups = [np.asarray(g, dtype=int) for g in partition]
    labels = _group_labels(groups, op.shape[1])
    taken = np.zeros(len(groups), dtype=bool)

    def select(q, selected):
        energy = np.bincount(labels, weights=np.where(np.isfinite(q), q, 0.0) ** 2, minlength=len(groups))
        energy[taken] = -np.inf
        if np.all(taken):
            return np.zeros(0, dtype=int)
        j = int(_top_indices(energy, 1)[0])
        taken[j] = True
        return np.sort(groups[j])

    return _pursuit(op, y0, select, eps, n_iter, "gomp", truth, dictionary)


def ls_baseline(op: MeasurementOperator, y0, truth=None, dictionary: Dictionary | None = None,
                rel_tol: float = 1e-10) -> RecoverySolution:
    """Minimum-norm least squares on the whole operator (no sparsity prior).

    Uses ``x = M^H (M M^H)^+ y``; ``M M^H`` is block diagonal over pilot
    subcarriers, so the pseudo-inverse is taken block by block.
    """
    y0 = np.asarray(y0, dtype=complex)
    n_r, n_p = op.plan.n_r, op.plan.n_p
    Y = y0.reshape(n_r, n_p, order="F")
    Z = np.zeros_like(Y)
    for p, block in enumerate(op.gram_blocks()):
        Z[:, p] = np.linalg.pinv(block, rcond=rel_tol, hermitian=True) @ Y[:, p]
    x_hat = op.adjoint(Z.reshape(-1, order="F"))
    residual = y0 - op.apply(x_hat)
    state = RecoveryState(residual=residual, iteration=1,
                          residual_history=[float(np.linalg.norm(y0)), float(np.linalg.norm(residual))])
    D = dictionary if dictionary is not None else Dictionary(op.config)
    sol = RecoverySolution(D.apply(x_hat), x_hat, state, (op.config.M, op.config.K), method="ls")
    if truth is not None:
        sol.relative_error = relative_error(sol.grid, truth)
    return sol


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    mu_group: float
    subcoherence: float
    partition: list
    omp_condition_ok: bool
    group_condition_ok: bool
    subsampled: bool
    n_columns: int

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "mu_group": self.mu_group, "subcoherence": self.subcoherence,
            "n_groups": len(self.partition), "omp_condition_ok": self.omp_condition_ok,
            "group_condition_ok": self.group_condition_ok, "subsampled": self.subsampled,
            "n_columns": self.n_columns,
        }


def coherence_from_columns(cols: np.ndarray, groups, L: int = 1) -> CoherenceReport:
    """Coherence, group coherence and sub-coherence of explicit columns.

    ``groups`` index the columns of ``cols`` and must share one size ``gamma``.
    """
    cols = np.asarray(cols)
    norms = np.linalg.norm(cols, axis=0)
    cols = cols / np.where(norms == 0, 1.0, norms)
    groups = [np.asarray(g, dtype=int) for g in groups]
    gamma = len(groups[0])
    if any(len(g) != gamma for g in groups):
        raise ValueError("coherence needs equal-size groups")
    gram = np.conj(cols).T @ cols
    absg = np.abs(gram)
    np.fill_diagonal(absg, 0.0)
    mu = float(absg.max()) if absg.size > 1 else 0.0

    order = np.concatenate(groups)
    J = len(groups)
    blocks = gram[np.ix_(order, order)].reshape(J, gamma, J, gamma).transpose(0, 2, 1, 3)
    nu = 0.0
    for j in range(J):
        inner = np.abs(blocks[j, j])
        np.fill_diagonal(inner, 0.0)
        nu = max(nu, float(inner.max()) if gamma > 1 else 0.0)
    if J > 1:
        iu, ju = np.triu_indices(J, k=1)
        mu_group = float(np.max(spectral_norm(blocks[iu, ju]))) / gamma
    else:
        mu_group = 0.0
    s = gamma * L
    omp_ok = bool(mu == 0 or s < (1.0 / mu + 1.0) / 2.0)
    if mu_group == 0:
        group_ok = True
    else:
        group_ok = bool(s < (1.0 / mu_group + gamma - (gamma - 1) * nu / mu_group) / 2.0)
    return CoherenceReport(mu, mu_group, nu, groups, omp_ok, group_ok, False, cols.shape[1])


def coherence_report(op: MeasurementOperator, gamma: int, partition=None, L: int = 1,
                     max_columns: int = 2048, rng_seed: int = 0) -> CoherenceReport:
    """Coherence diagnostics of the measurement operator under a block partition.

    When the operator has more than ``max_columns`` columns, whole groups are
    sampled at random (seeded) and the report is flagged ``subsampled``.
    """
    M, K = op.config.M, op.config.K
    if partition is None:
        from .leakage import factor_block
        partition = rectangle_partition(M, K, factor_block(gamma, 2.0))
    groups = [np.asarray(g, dtype=int) for g in partition if len(g) == gamma]
    subsampled = False
    if len(groups) * gamma > max_columns:
        rng = np.random.Generator(np.random.Philox(rng_seed))
        keep = np.sort(rng.choice(len(groups), max(2, max_columns // gamma), replace=False))
        groups = [groups[j] for j in keep]
        subsampled = True
    flat = np.concatenate(groups)
    cols = op.extract_columns(flat)
    local = [np.arange(j * gamma, (j + 1) * gamma) for j in range(len(groups))]
    rep = coherence_from_columns(cols, local, L)
    return CoherenceReport(rep.mu, rep.mu_group, rep.subcoherence, groups, rep.omp_condition_ok,
                           rep.group_condition_ok, subsampled, rep.n_columns)


@dataclass(frozen=True)
class ErrorBoundParams:
    delta_kP: float
    delta_P: float
    k: int
    P: int
    c: float = 1.0

    @property
    def rho(self) -> float:
        return self.k / self.P


def error_bound_constants(params: ErrorBoundParams, literal_c1: bool = False) -> tuple[float, float]:
    """Constants ``(C0, C1)`` of the group-sparse recovery error bound.

    ``C1`` defaults to the form that follows from solving the final inequality
    for the error norm, ``2 / (sqrt(rho) (b sqrt(1-d_kP) - sqrt(1+d_P)))``;
    ``literal_c1=True`` returns ``2 / (b sqrt(rho) sqrt(1-d_kP) - sqrt(1+d_P))``
    instead, which is not positive for many admissible parameters.
    """
    p = params
    if not (0 <= p.delta_kP < 1 and 0 <= p.delta_P < 1):
        raise ValueError("isometry constants must lie in [0, 1)")
    if not (p.k >= 1 and p.P > p.k and p.c > 0):
        raise ValueError("need 1 <= k < P and c > 0")
    rho = p.rho
    b2 = 1.0 / rho - 1.0 - p.c
    if b2 <= 0:
        raise ValueError("infeasible parameters: 1/rho - 1 - c must be positive")
    a, b = np.sqrt(1.0 + 1.0 / p.c), np.sqrt(b2)
    lo, hi = np.sqrt(1.0 - p.delta_kP), np.sqrt(1.0 + p.delta_P)
    denom = b * lo - hi
    if denom <= 0:
        raise ValueError("infeasible parameters: b*sqrt(1-delta_kP) must exceed sqrt(1+delta_P)")
    C0 = 2.0 * (a * lo + hi) / denom
    if literal_c1:
        C1 = 2.0 / (b * np.sqrt(rho) * lo - hi)
    else:
        C1 = 2.0 / (np.sqrt(rho) * denom)
    return float(C0), float(C1)


def optimal_c(delta_kP: float, delta_P: float, k: int, P: int) -> tuple[float, float]:
    """The ``c`` minimizing ``C0`` (bounded golden-section/Brent search) and that minimum."""
    rho = k / P
    lo, hi = np.sqrt(1.0 - delta_kP), np.sqrt(1.0 + delta_P)
    # feasible c: 0 < c < 1/rho - 1 - (hi/lo)^2
    c_max = 1.0 / rho - 1.0 - (hi / lo) ** 2
    if c_max <= 0:
        raise ValueError("no c makes the bound finite for these parameters")

    def C0(c):
        return error_bound_constants(ErrorBoundParams(delta_kP, delta_P, k, P, c))[0]

    res = optimize.minimize_scalar(C0, bounds=(c_max * 1e-9, c_max * (1 - 1e-9)), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x), float(res.fun)
