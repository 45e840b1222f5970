"""Experiment specification, per-trial tasks and the figure recipes.

Every trial derives its random streams from ``(spec seed, trial)`` only, so a
run is reproducible regardless of how trials are spread over workers.  Rows
are written in task order through one CSV sink.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import equalization as eq
from . import leakage, linklevel, recovery
from .model import SystemConfig, draw_paths, synthesize_sfg
from .operators import Dictionary, MeasurementOperator, SamplingPlan, noise_sigma_for_snr, observe
from .rng import trial_seed

SCHEMA_VERSION = 1
DESK_SIZE = 64
FULL_SIZE = 128

ESTIMATORS = ("dc-gomp", "omp", "gomp", "ls")
SELECTORS = ("equal", "bb", "grsip", "random:100")

# stream ids inside one trial
PATHS, PLAN, NOISE, LINK, SELECT = range(5)


class SpecError(ValueError):
    """Invalid experiment specification."""


def _stream(tseed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(tseed), int(stream)])


SWEEP_AXES = ("L", "snr_db", "n_r", "n_p", "aperture_wavelengths", "method")


@dataclass
class ExperimentSpec:
    """One experiment: system, sweep axes, trial count, seed and options.

    JSON layout::

        {"schema_version": 1, "name": ..., "config": {...SystemConfig...},
         "sweep": {"L": [...], "snr_db": [...], "n_r": [...], "n_p": [...],
                   "aperture_wavelengths": [...], "method": [...]},
         "trials": 3, "seed": 0, "output_dir": "faslab-out",
         "options": {"gamma": 8, "n_iter": 50, ...}}

    ``method`` may be omitted; each command then uses its own default list.
    """

    name: str = "faslab"
    config: SystemConfig = field(default_factory=lambda: SystemConfig(M=DESK_SIZE, K=DESK_SIZE))
    L: list = field(default_factory=lambda: [40])
    snr_db: list = field(default_factory=lambda: [10.0])
    n_r: list = field(default_factory=lambda: [20])
    n_p: list = field(default_factory=lambda: [40])
    aperture_wavelengths: list = field(default_factory=lambda: [10.0])
    method: list | None = None
    trials: int = 3
    seed: int = 0
    output_dir: str = "faslab-out"
    # options
    gamma: int | None = 8
    n_iter: int = 50
    plan: str = "random"
    ber_snr_db: list = field(default_factory=lambda: [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
    symbols_per_point: int = 1000
    bb_node_budget: int = 500_000
    delta_kP: float = 0.1
    delta_P: float = 0.1

    OPTIONS = ("gamma", "n_iter", "plan", "ber_snr_db", "symbols_per_point", "bb_node_budget",
               "delta_kP", "delta_P")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for axis in SWEEP_AXES:
            values = getattr(self, axis)
            if values is None and axis == "method":
                continue
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise SpecError(f"sweep axis {axis!r} must be a nonempty list")
        if int(self.trials) != self.trials or self.trials < 1:
            raise SpecError("trials must be an integer >= 1")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise SpecError("seed must be an unsigned 64-bit integer")
        if self.plan not in ("random", "uniform"):
            raise SpecError("plan must be 'random' or 'uniform'")
        if self.gamma is not None and self.gamma < 1:
            raise SpecError("gamma must be at least 1")
        if self.n_iter < 1:
            raise SpecError("n_iter must be at least 1")
        if self.symbols_per_point < linklevel.MIN_MC_SYMBOLS:
            raise SpecError(f"symbols_per_point must be at least {linklevel.MIN_MC_SYMBOLS}")
        if any(L < 1 for L in self.L):
            raise SpecError("L values must be positive")
        for n_r in self.n_r:
            if not 1 <= n_r <= self.config.M:
                raise SpecError("n_r values must lie in [1, M]")
        for n_p in self.n_p:
            if not 1 <= n_p <= self.config.K:
                raise SpecError("n_p values must lie in [1, K]")
        if any(a <= 0 for a in self.aperture_wavelengths):
            raise SpecError("apertures must be positive")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "config": self.config.to_dict(),
            "sweep": {a: getattr(self, a) for a in SWEEP_AXES if getattr(self, a) is not None},
            "trials": self.trials,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "options": {o: getattr(self, o) for o in self.OPTIONS},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise SpecError("spec must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise SpecError(f"unsupported schema_version {version!r}")
        known = {"schema_version", "name", "config", "sweep", "trials", "seed", "output_dir", "options"}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        kwargs = {k: data[k] for k in ("name", "trials", "seed", "output_dir") if k in data}
        cfg = data.get("config", {})
        unknown = set(cfg) - {f.name for f in fields(SystemConfig)}
        if unknown:
            raise SpecError(f"unknown config keys: {sorted(unknown)}")
        base = SystemConfig(M=DESK_SIZE, K=DESK_SIZE).to_dict()
        base.update(cfg)
        try:
            kwargs["config"] = SystemConfig(**base)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid config: {exc}") from exc
        sweep = data.get("sweep", {})
        unknown = set(sweep) - set(SWEEP_AXES)
        if unknown:
            raise SpecError(f"unknown sweep axes: {sorted(unknown)}")
        kwargs.update(sweep)
        options = data.get("options", {})
        unknown = set(options) - set(cls.OPTIONS)
        if unknown:
            raise SpecError(f"unknown options: {sorted(unknown)}")
        kwargs.update(options)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"spec is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentSpec":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ExperimentSpec(**values)

    def with_size(self, size: int) -> "ExperimentSpec":
        return self.replace(config=self.config.replace(M=size, K=size))

    def methods(self, default) -> list:
        return list(self.method) if self.method is not None else list(default)


# ---------------------------------------------------------------- output sink

def fmt(value) -> str:
    """Locale-free, round-trip text for CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(value)


class CsvSink:
    """Single writer for one CSV file; rows arrive as dicts in task order."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)
        self.rows = 0

    def write(self, rows) -> None:
        for row in rows:
            self._writer.writerow([fmt(row[c]) for c in self.columns])
            self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_tasks(func, tasks, workers: int = 1):
    """Yield ``func(task)`` in task order, optionally over worker processes."""
    if workers <= 1:
        for t in tasks:
            yield func(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(func, tasks)


# ---------------------------------------------------------------- trial tasks

def _trial_system(spec: ExperimentSpec, trial: int, L: int, aperture: float):
    cfg = spec.config.replace(aperture_wavelengths=float(aperture))
    tseed = trial_seed(spec.seed, trial)
    paths = draw_paths(cfg, int(L), _stream(tseed, PATHS))
    return cfg, tseed, paths, synthesize_sfg(cfg, paths)


def _relative_noise(snr_db: float) -> float:
    # the leakage threshold compares against a unit-power path
    return 10 ** (-snr_db / 10)


def _gamma(spec: ExperimentSpec, cfg: SystemConfig, snr_db: float) -> int:
    if spec.gamma is not None:
        return int(spec.gamma)
    return leakage.LeakageParams.from_config(cfg, noise_var=_relative_noise(snr_db)).gamma


def estimate_task(task) -> list[dict]:
    """Recover one trial's grid with each method at one sweep point."""
    spec, trial, point, methods, history = task
    L, snr, n_r, n_p, aperture = point
    cfg, tseed, paths, sfg = _trial_system(spec, trial, L, aperture)
    if spec.plan == "random":
        plan = SamplingPlan.random(cfg, n_r, n_p, _stream(tseed, PLAN))
    else:
        plan = SamplingPlan.uniform(cfg, n_r, n_p)
    sigma = noise_sigma_for_snr(sfg, plan, snr)
    obs = observe(sfg, plan, sigma, _stream(tseed, NOISE))
    gamma = _gamma(spec, cfg, snr)
    op = MeasurementOperator(cfg, plan, gamma=gamma, L=int(L))
    D = Dictionary(cfg)
    eps = recovery.default_epsilon(op, sigma)
    rows = []
    for method in methods:
        sol = solve_estimate(method, op, obs.y0, gamma, eps, spec.n_iter, sfg.entries, D)
        base = {"experiment": spec.name, "trial": trial, "seed": tseed, "L": L, "snr_db": snr,
                "n_r": n_r, "n_p": n_p, "aperture_wavelengths": aperture, "method": method,
                "gamma": gamma if method in ("dc-gomp", "gomp") else 1,
                "iterations": sol.state.iteration, "relative_error": sol.relative_error}
        if history:
            for it, r in enumerate(sol.state.residual_history):
                rows.append({**base, "iteration": it, "residual_norm": r})
        else:
            rows.append(base)
    return rows


def solve_estimate(method, op, y0, gamma, eps, n_iter, truth, D):
    if method == "dc-gomp":
        return recovery.dc_gomp(op, y0, gamma, eps, n_iter, truth=truth, dictionary=D)
    if method == "omp":
        return recovery.omp(op, y0, eps, n_iter, truth=truth, dictionary=D)
    if method == "gomp":
        return recovery.gomp_uniform(op, y0, gamma, eps, n_iter, truth=truth, dictionary=D)
    if method == "ls":
        return recovery.ls_baseline(op, y0, truth=truth, dictionary=D)
    raise SpecError(f"unknown estimation method {method!r}")


def check_selector(method: str) -> None:
    if method in ("equal", "bb", "grsip"):
        return
    if method.startswith("random:"):
        try:
            if int(method.split(":", 1)[1]) >= 1:
                return
        except ValueError:
            pass
    raise SpecError(f"unknown selection method {method!r}")


def select_rows(method: str, G, n_r: int, spec: ExperimentSpec, rng_seed) -> eq.EqualizationSolution:
    M = G.shape[0]
    if method == "equal":
        rows = eq.equal_spaced(M, n_r)
        return eq.EqualizationSolution(rows, eq.min_subcarrier_gain(np.abs(G) ** 2, rows),
                                       eq.HEURISTIC, method="equal")
    if method == "bb":
        return eq.branch_and_bound(eq.EqualizationProblem.from_channel(G, n_r), node_budget=spec.bb_node_budget)
    if method == "grsip":
        return eq.grsip(G, n_r)
    if method.startswith("random:"):
        return eq.random_baseline(G, n_r, int(method.split(":", 1)[1]), rng_seed)
    raise SpecError(f"unknown selection method {method!r}")


def _db(x) -> float:
    return float(10 * np.log10(x)) if x > 0 else float("-inf")


def equalize_task(task) -> tuple[list[dict], list[dict]]:
    """Select antennas on one trial channel with each method; returns (rows, timings)."""
    spec, trial, (L, aperture, n_r), methods = task
    cfg, tseed, paths, sfg = _trial_system(spec, trial, L, aperture)
    G = sfg.entries
    rows, timings = [], []
    for method in methods:
        sol = select_rows(method, G, n_r, spec, _stream(tseed, SELECT))
        gains = eq.combined_gains(G, sol.selected)
        rows.append({"experiment": spec.name, "trial": trial, "seed": tseed, "L": L,
                     "aperture_wavelengths": aperture, "n_r": n_r, "method": method,
                     "indices": sol.selected, "t": sol.t, "min_gain_db": _db(gains.min()),
                     "mean_gain_db": _db(gains.mean()), "certificate": sol.certificate,
                     "nodes": sol.nodes_explored})
        timings.append({"method": method, "wall_time": sol.wall_time})
    return rows, timings


def ber_task(task) -> list[dict]:
    """BER curves for each selection method on one trial channel.

    With ``estimated`` set, antennas are chosen on the DC-GOMP estimate of the
    channel and the link runs over the true channel.
    """
    spec, trial, (L, aperture, n_r), methods, estimated = task
    cfg, tseed, paths, sfg = _trial_system(spec, trial, L, aperture)
    G = sfg.entries
    G_sel = G
    if estimated:
        n_p = spec.n_p[0]
        plan = SamplingPlan.random(cfg, n_r, n_p, _stream(tseed, PLAN)) if spec.plan == "random" \
            else SamplingPlan.uniform(cfg, n_r, n_p)
        sigma = noise_sigma_for_snr(sfg, plan, spec.snr_db[0])
        obs = observe(sfg, plan, sigma, _stream(tseed, NOISE))
        gamma = _gamma(spec, cfg, spec.snr_db[0])
        op = MeasurementOperator(cfg, plan, gamma=gamma, L=int(L))
        sol = recovery.dc_gomp(op, obs.y0, gamma, recovery.default_epsilon(op, sigma), spec.n_iter)
        G_sel = sol.grid
    link = linklevel.LinkConfig(spec.ber_snr_db, spec.symbols_per_point)
    rows = []
    for m_idx, method in enumerate(methods):
        sel = select_rows(method, G_sel, n_r, spec, _stream(tseed, SELECT)).selected
        mc = linklevel.ber_monte_carlo(G, sel, link, _stream(tseed, LINK * 100 + m_idx))
        an = linklevel.ber_analytic(G, sel, link)
        for snr, b, a in zip(link.snr_db_grid, mc, an):
            rows.append({"experiment": spec.name, "trial": trial, "seed": tseed, "L": L,
                         "aperture_wavelengths": aperture, "n_r": n_r, "method": method,
                         "channel": "estimated" if estimated else "true",
                         "snr_db": snr, "ber": b, "ber_analytic": a})
    return rows


# ---------------------------------------------------------------- commands

ESTIMATE_COLUMNS = ["experiment", "trial", "seed", "L", "snr_db", "n_r", "n_p", "aperture_wavelengths",
                    "method", "gamma", "iterations", "relative_error"]
EQUALIZE_COLUMNS = ["experiment", "trial", "seed", "L", "aperture_wavelengths", "n_r", "method", "indices",
                    "t", "min_gain_db", "mean_gain_db", "certificate", "nodes"]
BER_COLUMNS = ["experiment", "trial", "seed", "L", "aperture_wavelengths", "n_r", "method", "channel",
               "snr_db", "ber", "ber_analytic"]


def _mean_by(rows, key, value):
    out = {}
    for r in rows:
        out.setdefault(r[key], []).append(r[value])
    return {k: float(np.mean(v)) for k, v in out.items()}


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(spec: ExperimentSpec, out: str, workers: int = 1, log=print) -> int:
    os.makedirs(out, exist_ok=True)
    cols = ["experiment", "trial", "seed", "L", "aperture_wavelengths", "mean_power", "min_power", "paths_file",
            "grid_file"]
    with CsvSink(os.path.join(out, "synth.csv"), cols) as sink:
        for trial, L, ap in itertools.product(range(spec.trials), spec.L, spec.aperture_wavelengths):
            cfg, tseed, paths, sfg = _trial_system(spec, trial, L, ap)
            stem = f"trial{trial}_L{L}_ap{fmt(float(ap))}"
            with open(os.path.join(out, f"paths_{stem}.json"), "w") as fh:
                fh.write(paths.to_json() + "\n")
            recovery.write_complex_csv(sfg.entries, os.path.join(out, f"grid_{stem}.csv"))
            sink.write([{"experiment": spec.name, "trial": trial, "seed": tseed, "L": L,
                         "aperture_wavelengths": ap, "mean_power": float(sfg.power.mean()),
                         "min_power": float(sfg.power.min()), "paths_file": f"paths_{stem}.json",
                         "grid_file": f"grid_{stem}.csv"}])
        log(f"synth: wrote {sink.rows} grids to {out}")
    return 0


def cmd_estimate(spec: ExperimentSpec, out: str, workers: int = 1, log=print, filename="estimate.csv",
                 history: bool = False) -> int:
    methods = spec.methods(ESTIMATORS)
    for m in methods:
        if m not in ESTIMATORS:
            raise SpecError(f"unknown estimation method {m!r}")
    os.makedirs(out, exist_ok=True)
    points = list(itertools.product(spec.L, spec.snr_db, spec.n_r, spec.n_p, spec.aperture_wavelengths))
    tasks = [(spec, trial, p, methods, history) for p in points for trial in range(spec.trials)]
    cols = ESTIMATE_COLUMNS + (["iteration", "residual_norm"] if history else [])
    collected = []
    with CsvSink(os.path.join(out, filename), cols) as sink:
        for rows in run_tasks(estimate_task, tasks, workers):
            sink.write(rows)
            collected.extend(rows)
    finals = [r for r in collected if not history or r["iteration"] == r["iterations"]]
    for m, v in _mean_by(finals, "method", "relative_error").items():
        log(f"{m:>8s}: mean relative error {v:.4f} over {len(points) * spec.trials} runs")
    return 0


def cmd_equalize(spec: ExperimentSpec, out: str, workers: int = 1, log=print,
                 filename="equalize.csv") -> int:
    methods = spec.methods(SELECTORS)
    for m in methods:
        check_selector(m)
    os.makedirs(out, exist_ok=True)
    points = list(itertools.product(spec.L[:1], spec.aperture_wavelengths, spec.n_r))
    tasks = [(spec, trial, p, methods) for p in points for trial in range(spec.trials)]
    times = {m: [] for m in methods}
    collected = []
    with CsvSink(os.path.join(out, filename), EQUALIZE_COLUMNS) as sink:
        for rows, timings in run_tasks(equalize_task, tasks, workers):
            sink.write(rows)
            collected.extend(rows)
            for t in timings:
                times[t["method"]].append(t["wall_time"])
    # measured times vary run to run, so they live in their own file
    with CsvSink(os.path.join(out, "timing.csv"), ["method", "Average time(s)", "runs"]) as sink:
        sink.write([{"method": m, "Average time(s)": float(np.mean(v)), "runs": len(v)} for m, v in times.items()])
    mins = _mean_by(collected, "method", "min_gain_db")
    means = _mean_by(collected, "method", "mean_gain_db")
    for m in methods:
        log(f"{m:>11s}: min gain {mins[m]:7.2f} dB  mean gain {means[m]:7.2f} dB  "
            f"avg time {np.mean(times[m]):.4g} s")
    return 0


def cmd_ber(spec: ExperimentSpec, out: str, workers: int = 1, log=print, filename="ber.csv",
            estimated: bool = False, methods=None) -> int:
    methods = list(methods) if methods is not None else spec.methods(("equal", "bb", "grsip"))
    for m in methods:
        check_selector(m)
    os.makedirs(out, exist_ok=True)
    points = list(itertools.product(spec.L[:1], spec.aperture_wavelengths, spec.n_r))
    tasks = [(spec, trial, p, methods, estimated) for p in points for trial in range(spec.trials)]
    collected = []
    with CsvSink(os.path.join(out, filename), BER_COLUMNS) as sink:
        for rows in run_tasks(ber_task, tasks, workers):
            sink.write(rows)
            collected.extend(rows)
    write_json(os.path.join(out, filename.replace(".csv", "_meta.json")),
               {"convention": linklevel.BER_CONVENTION, "symbols_per_point": spec.symbols_per_point,
                "modulation": "qpsk", "combining": "mrc"})
    top = max(spec.ber_snr_db)
    at_top = [r for r in collected if r["snr_db"] == top]
    for m, v in _mean_by(at_top, "method", "ber").items():
        log(f"{m:>11s}: mean BER {v:.3e} at {top:g} dB")
    return 0


def diagnose_report(spec: ExperimentSpec) -> dict:
    cfg = spec.config.replace(aperture_wavelengths=float(spec.aperture_wavelengths[0]))
    L, snr, n_r, n_p = spec.L[0], spec.snr_db[0], spec.n_r[0], spec.n_p[0]
    cfg_t, tseed, paths, sfg = _trial_system(spec, 0, L, cfg.aperture_wavelengths)
    plan = SamplingPlan.random(cfg, n_r, n_p, _stream(tseed, PLAN)) if spec.plan == "random" \
        else SamplingPlan.uniform(cfg, n_r, n_p)
    sigma = noise_sigma_for_snr(sfg, plan, snr)
    lp = leakage.LeakageParams.from_config(cfg, noise_var=_relative_noise(snr))
    gamma = int(spec.gamma) if spec.gamma is not None else lp.gamma
    op = MeasurementOperator(cfg, plan, gamma=gamma, L=int(L))
    coh = recovery.coherence_report(op, gamma, L=int(L), rng_seed=0)
    bound = leakage.lemma1_bound(cfg.omega_b, cfg.aperture, cfg.omega_c, lp.delta_tau, lp.delta_k,
                                 lp.threshold, cfg.c)
    bound_consts = {"delta_kP": spec.delta_kP, "delta_P": spec.delta_P, "k": int(L), "P": int(cfg.M * cfg.K // gamma)}
    try:
        c_opt, c0_opt = recovery.optimal_c(spec.delta_kP, spec.delta_P, int(L), bound_consts["P"])
        C0, C1 = recovery.error_bound_constants(
            recovery.ErrorBoundParams(spec.delta_kP, spec.delta_P, int(L), bound_consts["P"], c_opt))
        bound_consts.update({"c": c_opt, "C0": C0, "C1": C1, "feasible": True})
    except ValueError as exc:
        bound_consts.update({"feasible": False, "reason": str(exc)})
    return {
        "experiment": spec.name, "seed": tseed, "trial": 0,
        "config": cfg.to_dict(), "L": L, "snr_db": snr, "n_r": n_r, "n_p": n_p,
        "leakage": {"threshold": lp.threshold, "gamma_tau": lp.gamma_tau, "gamma_k": lp.gamma_k,
                    "gamma_formula": lp.gamma, "gamma_used": gamma, "block_shape": list(lp.block_shape),
                    "lemma1_bound": bound},
        "coherence": coh.to_dict(),
        "error_bound": bound_consts,
    }


def cmd_diagnose(spec: ExperimentSpec, out: str, workers: int = 1, log=print) -> int:
    os.makedirs(out, exist_ok=True)
    rep = diagnose_report(spec)
    write_json(os.path.join(out, "diagnose.json"), rep)
    lk, coh, th = rep["leakage"], rep["coherence"], rep["error_bound"]
    log(f"leakage: T={lk['threshold']:g} gamma_tau={lk['gamma_tau']:.4f} gamma_k={lk['gamma_k']:.4f} "
        f"gamma(formula)={lk['gamma_formula']} gamma(used)={lk['gamma_used']} block={lk['block_shape']} "
        f"lemma1 bound={lk['lemma1_bound']:.4f}")
    log(f"coherence: mu={coh['mu']:.4f} mu_group={coh['mu_group']:.4f} nu={coh['subcoherence']:.4f} "
        f"omp_ok={coh['omp_condition_ok']} group_ok={coh['group_condition_ok']} subsampled={coh['subsampled']}")
    if th["feasible"]:
        log(f"error bound: k={th['k']} P={th['P']} c={th['c']:.4g} C0={th['C0']:.4f} C1={th['C1']:.4f}")
    else:
        log(f"error bound: infeasible for k={th['k']} P={th['P']} ({th['reason']})")
    return 0


# ---------------------------------------------------------------- figure recipes

def recipe(spec: ExperimentSpec, fig: int) -> tuple[ExperimentSpec, str, dict]:
    """Spec overrides, command and command options for a figure recipe.

    Recipes keep the spec's system, trials, seed and options and replace the
    sweep axes with the figure's own.
    """
    base = dict(L=spec.L[:1], snr_db=spec.snr_db[:1], n_r=spec.n_r[:1], n_p=spec.n_p[:1],
                aperture_wavelengths=spec.aperture_wavelengths[:1])
    if fig == 3:
        return spec.replace(**base, method=["dc-gomp", "omp", "gomp", "ls"]), "estimate", {}
    if fig == 4:
        axes = dict(base, L=[80], n_r=[10, 15, 20, 25, 30], n_p=[20, 30, 40, 50, 60], method=["dc-gomp"])
        return spec.replace(**axes), "estimate", {}
    if fig == 5:
        axes = dict(base, L=[10, 20, 40, 60, 80], method=["dc-gomp", "omp", "gomp", "ls"])
        return spec.replace(**axes), "estimate", {}
    if fig == 6:
        return spec.replace(**base, method=["dc-gomp", "omp", "gomp"]), "estimate", {"history": True}
    if fig == 7:
        apertures = [2.0, 6.0, 10.0]
        return spec.replace(**base, method=["equal", "bb"]), "equalize-apertures", {"apertures": apertures}
    if fig == 8:
        return spec.replace(**base, method=["equal", "bb", "grsip"]), "ber-apertures", \
            {"apertures": [6.0, 8.0, 10.0]}
    if fig == 9:
        return spec.replace(**base, method=["equal", "grsip", "random:100", "random:20"]), "ber", {}
    if fig == 10:
        return spec.replace(**base, method=["equal", "grsip", "random:100"]), "ber", {"estimated": True}
    raise SpecError(f"no recipe for figure {fig}; choose 3-10")


def _aperture_pairs(apertures):
    # two antennas per wavelength of aperture
    return [(float(a), int(round(2 * a))) for a in apertures]


def cmd_sweep(spec: ExperimentSpec, out: str, fig: int, workers: int = 1, log=print) -> int:
    sub, command, opts = recipe(spec, fig)
    name = f"fig{fig}.csv"
    if command == "estimate":
        return cmd_estimate(sub, out, workers, log, filename=name, **opts)
    if command == "ber":
        return cmd_ber(sub, out, workers, log, filename=name, **opts)
    os.makedirs(out, exist_ok=True)
    pairs = _aperture_pairs(opts["apertures"])
    for _, n_r in pairs:
        if n_r > sub.config.M:
            raise SpecError(f"aperture needs {n_r} antennas but M={sub.config.M}")
    methods = sub.methods(())
    if command == "equalize-apertures":
        tasks = [(sub, trial, (sub.L[0], a, n), methods) for a, n in pairs for trial in range(sub.trials)]
        with CsvSink(os.path.join(out, name), EQUALIZE_COLUMNS) as sink:
            collected = []
            for rows, _ in run_tasks(equalize_task, tasks, workers):
                sink.write(rows)
                collected.extend(rows)
        for a, n in pairs:
            sel = [r for r in collected if r["aperture_wavelengths"] == a]
            mins = _mean_by(sel, "method", "min_gain_db")
            log(f"{a:g} lambda, N_r={n}: " + "  ".join(f"{m} min {v:.2f} dB" for m, v in mins.items()))
        return 0
    if command == "ber-apertures":
        tasks = [(sub, trial, (sub.L[0], a, n), methods, False) for a, n in pairs for trial in range(sub.trials)]
        with CsvSink(os.path.join(out, name), BER_COLUMNS) as sink:
            collected = []
            for rows in run_tasks(ber_task, tasks, workers):
                sink.write(rows)
                collected.extend(rows)
        write_json(os.path.join(out, f"fig{fig}_meta.json"),
                   {"convention": linklevel.BER_CONVENTION, "symbols_per_point": sub.symbols_per_point})
        top = max(sub.ber_snr_db)
        for a, n in pairs:
            sel = [r for r in collected if r["aperture_wavelengths"] == a and r["snr_db"] == top]
            bers = _mean_by(sel, "method", "ber")
            log(f"{a:g} lambda, N_r={n}: " + "  ".join(f"{m} {v:.2e}" for m, v in bers.items()))
        return 0
    raise AssertionError(command)


COMMANDS = {"synth": cmd_synth, "estimate": cmd_estimate, "equalize": cmd_equalize, "ber": cmd_ber,
            "diagnose": cmd_diagnose}


def run(spec: ExperimentSpec, command: str, out: str | None = None, workers: int = 1, fig: int = 3,
        log=print) -> int:
    """Run one command for ``spec``; returns the process exit code."""
    out = spec.output_dir if out is None else out
    if command == "sweep":
        return cmd_sweep(spec, out, fig, workers, log)
    if command not in COMMANDS:
        raise SpecError(f"unknown command {command!r}")
    return COMMANDS[command](spec, out, workers, log)


__all__ = [
    "ExperimentSpec", "SpecError", "run", "recipe", "SCHEMA_VERSION", "CsvSink", "fmt",
    "estimate_task", "equalize_task", "ber_task", "diagnose_report",
]
