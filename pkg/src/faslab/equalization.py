"""Spatial equalization: choose ``N_r`` antenna positions maximizing the weakest subcarrier.

With maximal-ratio combining, subcarrier ``k`` collects ``sum_{i in I} |G[i, k]|^2``;
the problem is ``max_I min_k`` of that sum over ``|I| = N_r`` rows.  Row
indices are 0-based.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .rng import make_rng

OPTIMAL = "optimal"
HEURISTIC = "heuristic"
BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass(frozen=True, eq=False)
class EqualizationProblem:
    """Nonnegative row weights (``M x K``) and the number of rows to select."""

    weights: np.ndarray
    n_r: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("weights must be a matrix")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not 1 <= self.n_r <= w.shape[0]:
            raise ValueError("n_r must lie in [1, M]")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_channel(cls, G, n_r: int) -> "EqualizationProblem":
        return cls(np.abs(np.asarray(G)) ** 2, n_r)

    def objective(self, rows) -> float:
        return min_subcarrier_gain(self.weights, rows)


@dataclass
class EqualizationSolution:
    selected: np.ndarray
    t: float
    certificate: str
    nodes_explored: int = 0
    wall_time: float = 0.0
    method: str = ""
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "indices": [int(i) for i in self.selected],
            "t": float(self.t),
            "certificate": self.certificate,
            "nodes": int(self.nodes_explored),
            "wall_time": float(self.wall_time),
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def min_subcarrier_gain(weights, rows) -> float:
    rows = np.asarray(rows, dtype=int)
    return float(np.asarray(weights)[rows].sum(axis=0).min())


def combined_gains(G, rows) -> np.ndarray:
    """Per-subcarrier MRC gain ``||h_k||^2`` over the selected rows."""
    rows = np.asarray(rows, dtype=int)
    return (np.abs(np.asarray(G)[rows]) ** 2).sum(axis=0)


def equal_spaced(M: int, n_r: int) -> np.ndarray:
    """Equally spaced indices over ``0..M-1`` including both ends."""
    if not 1 <= n_r <= M:
        raise ValueError("need 1 <= n_r <= M")
    if n_r == 1:
        return np.array([0])
    pos = np.floor(np.arange(n_r) * (M - 1) / (n_r - 1) + 0.5).astype(int)
    return np.unique(pos)


def _suffix_top_sums(w: np.ndarray, n_r: int) -> np.ndarray:
    """``S[d, r, ...]``: sum of the ``r`` largest ``w[d:, ...]`` (``-inf`` if fewer than ``r`` rows)."""
    M = w.shape[0]
    S = np.full((M + 1, n_r + 1) + w.shape[1:], -np.inf)
    S[:, 0] = 0.0
    for d in range(M - 1, -1, -1):
        S[d, 1:] = np.maximum(S[d + 1, 1:], w[d][None] + S[d + 1, :-1])
    return S


def lp_relaxation(weights, n_r: int) -> tuple[float, np.ndarray]:
    """Value of the continuous relaxation and its subcarrier multipliers.

    Solves ``max t`` s.t. ``sum_i p_i w[i, k] >= t``, ``sum p = n_r``,
    ``0 <= p <= 1``.  The multipliers ``lam`` lie on the simplex and give the
    bound ``t <= sum of the n_r largest (w @ lam)`` for every integral
    selection.
    """
    w = np.asarray(weights, dtype=float)
    M, K = w.shape
    c = np.zeros(M + 1)
    c[-1] = -1.0
    res = optimize.linprog(
        c, A_ub=np.hstack([-w.T, np.ones((K, 1))]), b_ub=np.zeros(K),
        A_eq=np.r_[np.ones(M), 0.0][None], b_eq=[n_r],
        bounds=[(0, 1)] * M + [(None, None)], method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"LP relaxation failed: {res.message}")
    lam = np.clip(-res.ineqlin.marginals, 0.0, None)
    total = lam.sum()
    lam = lam / total if total > 0 else np.full(K, 1.0 / K)
    return float(-res.fun), lam


def _swap_improve(w: np.ndarray, rows: list[int]) -> list[int]:
    """First-improvement single swaps until no swap raises the objective."""
    rows = list(rows)
    M = w.shape[0]
    acc = w[rows].sum(axis=0)
    best = acc.min()
    improved = True
    while improved:
        improved = False
        outside = np.setdiff1d(np.arange(M), rows)
        if outside.size == 0:
            break
        for pos, i in enumerate(rows):
            base = acc - w[i]
            vals = (base[None, :] + w[outside]).min(axis=1)
            j = int(np.argmax(vals))
            if vals[j] > best * (1 + 1e-12) + 1e-300:
                rows[pos] = int(outside[j])
                acc = base + w[outside[j]]
                best = acc.min()
                improved = True
                break
    return rows


def branch_and_bound(problem: EqualizationProblem, node_budget: int | None = None,
                     time_budget: float | None = None, branch_order: str = "lagrangian") -> EqualizationSolution:
    """Exact max-min row selection by depth-first branch and bound.

    Rows are branched in order of decreasing Lagrangian score ``w @ lam``
    (``lam`` from the root relaxation; ``branch_order="total"`` uses the row
    total weight instead), include-branch first.  A node with
    ``r`` rows still to pick is pruned when either bound falls below the
    incumbent:

    * ``min_k [included w[:, k] + the r largest free w[:, k]]``;
    * ``lam . included + the r largest free scores``.

    The incumbent starts from :func:`grsip` polished by single swaps.  Among
    optimal selections the lexicographically smallest sorted index set wins,
    matching :func:`exhaustive`.
    """
    start = time.perf_counter()
    w_orig = problem.weights
    M, K = w_orig.shape
    n_r = problem.n_r

    lp_value, lam = lp_relaxation(w_orig, n_r)
    score_orig = w_orig @ lam
    if branch_order == "lagrangian":
        key = score_orig
    elif branch_order == "total":
        key = w_orig.sum(axis=1)
    else:
        raise ValueError("branch_order must be 'lagrangian' or 'total'")
    order = np.lexsort((np.arange(M), -key))
    w = w_orig[order]
    score = score_orig[order]
    S = _suffix_top_sums(w, n_r)
    S_lam = _suffix_top_sums(score, n_r)

    init = grsip(w_orig, n_r, weights_given=True)
    polished = sorted(_swap_improve(w_orig, list(init.selected)))
    best_rows = tuple(polished)
    best_t = min_subcarrier_gain(w_orig, best_rows)
    start_t = best_t

    def slack(t):
        return 1e-12 * max(1.0, abs(t))

    def offer(local_rows):
        nonlocal best_t, best_rows
        rows = tuple(sorted(int(order[i]) for i in local_rows))
        t = min_subcarrier_gain(w_orig, rows)
        if t > best_t or (t == best_t and rows < best_rows):
            best_t, best_rows = t, rows

    nodes = 0
    exhausted = False
    stack = [(0, (), np.zeros(K), 0.0)]
    while stack:
        if (node_budget is not None and nodes >= node_budget) or \
                (time_budget is not None and time.perf_counter() - start > time_budget):
            exhausted = True
            break
        depth, chosen, in_sum, in_lam = stack.pop()
        nodes += 1
        rem = n_r - len(chosen)
        if rem == 0:
            offer(chosen)
            continue
        if M - depth < rem:
            continue
        cut = best_t - slack(best_t)
        if in_lam + S_lam[depth, rem] < cut:
            continue
        if float((in_sum + S[depth, rem]).min()) < cut:
            continue
        if M - depth == rem:
            offer(chosen + tuple(range(depth, M)))
            continue
        stack.append((depth + 1, chosen, in_sum, in_lam))
        stack.append((depth + 1, chosen + (depth,), in_sum + w[depth], in_lam + score[depth]))

    selected = np.asarray(best_rows, dtype=int)
    return EqualizationSolution(
        selected=selected,
        t=best_t,
        certificate=BUDGET_EXHAUSTED if exhausted else OPTIMAL,
        nodes_explored=nodes,
        wall_time=time.perf_counter() - start,
        method="bb",
        flags={"improved_on_greedy": bool(best_t > init.t), "improved_on_start": bool(best_t > start_t),
               "root_bound": lp_value},
    )


def default_grsip_params(M: int, n_r: int) -> tuple[int, int]:
    """``(N_init, delta_n)`` defaults: a quarter of the antennas, spaced ``M / (2 N_r)`` apart."""
    return max(1, n_r // 4), M // (2 * n_r)


def grsip(G, n_r: int, n_init: int | None = None, delta_n: int | None = None,
          weights_given: bool = False) -> EqualizationSolution:
    """Greedy row selection with isolated preselection.

    Phase 1 takes ``n_init`` rows by mean power, each at least ``delta_n``
    index steps from those already chosen (falling back to the best
    violating row, flagged, when none qualifies).  Phase 2 adds rows one at a
    time, maximizing the weakest subcarrier of the augmented selection.
    """
    start = time.perf_counter()
    w = np.asarray(G, dtype=float) if weights_given else np.abs(np.asarray(G)) ** 2
    M, K = w.shape
    d_init, d_sep = default_grsip_params(M, n_r)
    n_init = d_init if n_init is None else int(n_init)
    delta_n = d_sep if delta_n is None else int(delta_n)
    if not 1 <= n_r <= M:
        raise ValueError("need 1 <= n_r <= M")
    if n_init > n_r:
        raise ValueError("n_init must not exceed n_r")
    if n_init < 0 or delta_n < 0:
        raise ValueError("n_init and delta_n must be nonnegative")

    score = w.mean(axis=1)
    rows = np.arange(M)
    chosen: list[int] = []
    free = np.ones(M, dtype=bool)
    violated = 0
    for _ in range(n_init):
        if chosen:
            dist = np.abs(rows[:, None] - np.asarray(chosen)[None, :]).min(axis=1)
        else:
            dist = np.full(M, np.inf)
        ok = free & (dist >= delta_n)
        if not np.any(ok):
            ok = free
            violated += 1
        cand = np.where(ok, score, -np.inf)
        i = int(np.argmax(cand))
        chosen.append(i)
        free[i] = False

    acc = w[chosen].sum(axis=0) if chosen else np.zeros(K)
    while len(chosen) < n_r:
        value = (acc[None, :] + w).min(axis=1)
        value[~free] = -np.inf
        i = int(np.argmax(value))
        chosen.append(i)
        free[i] = False
        acc = acc + w[i]

    selected = np.sort(np.asarray(chosen))
    return EqualizationSolution(
        selected=selected,
        t=min_subcarrier_gain(w, selected),
        certificate=HEURISTIC,
        wall_time=time.perf_counter() - start,
        method="grsip",
        flags={"separation_violations": violated, "n_init": n_init, "delta_n": delta_n},
    )


def random_baseline(G, n_r: int, draws: int, rng_seed, weights_given: bool = False) -> EqualizationSolution:
    """Best of ``draws`` distinct uniformly random ``n_r``-subsets.

    When ``draws`` reaches the number of subsets, every subset is scored.
    """
    start = time.perf_counter()
    if draws < 1:
        raise ValueError("draws must be at least 1")
    w = np.asarray(G, dtype=float) if weights_given else np.abs(np.asarray(G)) ** 2
    M, K = w.shape
    total = math.comb(M, n_r)
    if draws >= total:
        subsets = [np.array(c) for c in itertools.combinations(range(M), n_r)]
    else:
        rng = make_rng(rng_seed)
        seen = set()
        subsets = []
        while len(subsets) < draws:
            s = tuple(np.sort(rng.choice(M, n_r, replace=False)).tolist())
            if s not in seen:
                seen.add(s)
                subsets.append(np.array(s))
    best, best_t = None, -np.inf
    for s in subsets:
        t = min_subcarrier_gain(w, s)
        if t > best_t:
            best, best_t = s, t
    return EqualizationSolution(
        selected=np.sort(best), t=best_t, certificate=HEURISTIC,
        wall_time=time.perf_counter() - start, method=f"random:{draws}",
    )


def exhaustive(problem: EqualizationProblem) -> EqualizationSolution:
    """Score every subset (first maximizer in lexicographic order); for small instances only."""
    w = problem.weights
    best, best_t = None, -np.inf
    start = time.perf_counter()
    n = 0
    for s in itertools.combinations(range(w.shape[0]), problem.n_r):
        n += 1
        t = float(w[list(s)].sum(axis=0).min())
        if t > best_t:
            best, best_t = s, t
    return EqualizationSolution(np.array(best), best_t, OPTIMAL, n, time.perf_counter() - start, "exhaustive")
