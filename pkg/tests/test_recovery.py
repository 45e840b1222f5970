import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faslab.model import SystemConfig, draw_paths, synthesize_sfg
from faslab.operators import Dictionary, MeasurementOperator, SamplingPlan, noise_sigma_for_snr, observe
from faslab.recovery import (
    CoherenceReport, ErrorBoundParams, coherence_from_columns, coherence_report, dc_gomp, default_epsilon,
    error_bound_constants, gomp_uniform, ls_baseline, omp, optimal_c, rectangle_partition, relative_error,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def full_op(M=8, K=8, n_lambda=4.0):
    cfg = SystemConfig(M=M, K=K, aperture_wavelengths=n_lambda)
    return MeasurementOperator(cfg, SamplingPlan(np.arange(M), np.arange(K)))


def random_op(seed, M=8, K=8, n_r=5, n_p=6):
    cfg = SystemConfig(M=M, K=K, aperture_wavelengths=4.0)
    return MeasurementOperator(cfg, SamplingPlan.random(cfg, n_r, n_p, seed))


class TestRelativeError:
    def test_identity_and_scale(self):
        G = crandn(np.random.default_rng(0), 4, 3)
        assert relative_error(G, G) == 0
        assert relative_error(2 * G, G) == pytest.approx(0, abs=1e-15)
        assert relative_error(-G, G) == pytest.approx(2.0)

    def test_rejects(self):
        with pytest.raises(ValueError):
            relative_error(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError):
            relative_error(np.ones((2, 2)), np.ones((2, 3)))

    @given(st.integers(0, 10 ** 6))
    def test_range(self, seed):
        rng = np.random.default_rng(seed)
        e = relative_error(crandn(rng, 3, 3), crandn(rng, 3, 3))
        assert 0 <= e <= 2 + 1e-12


class TestPursuit:
    def test_zero_observation(self):
        op = full_op()
        sol = dc_gomp(op, np.zeros(op.shape[0]), 4, 0.0, 10)
        assert sol.state.iteration == 0
        assert np.all(sol.x_hat == 0) and np.all(sol.g_hat == 0)

    def test_single_column_exact(self):
        op = full_op()
        y = op.extract_columns([19])[:, 0] * (0.3 - 2j)
        sol = dc_gomp(op, y, 1, 1e-10, 10)
        assert sol.state.iteration == 1
        assert sol.state.support == [19]
        assert sol.state.residual_history[-1] < 1e-10

    def test_omp_is_dc_gomp_gamma_one(self):
        op = random_op(3)
        y = crandn(np.random.default_rng(1), op.shape[0])
        a, b = omp(op, y, 0.0, 7), dc_gomp(op, y, 1, 0.0, 7)
        assert a.state.support == b.state.support
        assert np.array_equal(a.x_hat, b.x_hat)

    def test_orthogonal_pair(self):
        # same wavenumber, different taps: orthogonal columns under full pilot sampling
        op = full_op()
        cols = op.extract_columns([2 + 8 * 1, 2 + 8 * 5])
        assert abs(np.vdot(cols[:, 0], cols[:, 1])) < 1e-10
        y = cols @ np.array([1.0, 0.5j])
        sol = omp(op, y, 1e-9, 10)
        assert sol.state.iteration == 2
        assert sorted(sol.state.support) == [10, 42]
        assert np.allclose(sol.x_hat[[10, 42]], [1.0, 0.5j])

    def test_gomp_gamma_one_partition_is_omp(self):
        op = random_op(4)
        y = crandn(np.random.default_rng(2), op.shape[0])
        singletons = [np.array([i]) for i in range(op.shape[1])]
        a = gomp_uniform(op, y, 1, 0.0, 6, partition=singletons)
        b = omp(op, y, 0.0, 6)
        assert a.state.support == b.state.support

    def test_gomp_picks_true_group_first(self):
        op = full_op()
        y = op.extract_columns([27])[:, 0]
        part = rectangle_partition(8, 8, (2, 2))
        sol = gomp_uniform(op, y, 4, 1e-10, 1, partition=part)
        assert 27 in sol.state.support
        assert len(sol.state.support) == 4

    def test_gomp_rejects_bad_partition(self):
        op = full_op()
        with pytest.raises(ValueError):
            gomp_uniform(op, np.ones(64), 2, 0.0, 2, partition=[np.arange(10)])

    def test_dc_gomp_support_saturation(self):
        op = random_op(5, n_r=2, n_p=3)
        y = crandn(np.random.default_rng(3), op.shape[0])
        sol = dc_gomp(op, y, 4, 0.0, 10)
        assert sol.state.support_saturated
        assert len(sol.state.support) <= op.shape[0]

    def test_invalid_arguments(self):
        op = full_op()
        with pytest.raises(ValueError):
            dc_gomp(op, np.ones(64), 0, 0.0, 3)
        with pytest.raises(ValueError):
            dc_gomp(op, np.ones(64), 1, -1.0, 3)
        with pytest.raises(ValueError):
            dc_gomp(op, np.ones(64), 1, 0.0, 0)

    def test_iteration_cap(self):
        op = random_op(6)
        y = crandn(np.random.default_rng(4), op.shape[0])
        assert dc_gomp(op, y, 2, 0.0, 3).state.iteration == 3

    @settings(max_examples=30)
    @given(st.integers(0, 10 ** 6), st.integers(1, 4), st.sampled_from(["dc", "gomp"]))
    def test_pursuit_invariants(self, seed, gamma, kind):
        op = random_op(seed % 1000)
        y = crandn(np.random.default_rng(seed), op.shape[0])
        if kind == "dc":
            sol = dc_gomp(op, y, gamma, 0.0, 6)
        else:
            sol = gomp_uniform(op, y, gamma, 0.0, 6, partition=rectangle_partition(8, 8, (gamma, 1)))
        hist = np.array(sol.state.residual_history)
        assert np.all(np.diff(hist) <= 1e-9)
        assert len(set(sol.state.support)) == len(sol.state.support)
        if kind == "dc" and not sol.state.support_saturated:
            assert len(sol.state.support) == sol.state.iteration * gamma
        D = Dictionary(op.config)
        assert np.allclose(sol.g_hat, D.apply(sol.x_hat), atol=1e-10)
        # residual of the grid estimate equals the loop residual
        assert np.linalg.norm(op.apply(sol.x_hat) - y) == pytest.approx(hist[-1], abs=1e-10)


class TestLS:
    def test_full_sampling_exact(self):
        cfg = SystemConfig(M=8, K=8, aperture_wavelengths=4.0)
        sfg = synthesize_sfg(cfg, draw_paths(cfg, 3, 0))
        plan = SamplingPlan(np.arange(8), np.arange(8))
        op = MeasurementOperator(cfg, plan)
        sol = ls_baseline(op, observe(sfg, plan, 0.0, 0).y0, truth=sfg.entries)
        assert sol.relative_error < 1e-8

    def test_compressed_fails(self):
        cfg = SystemConfig(M=64, K=64)
        sfg = synthesize_sfg(cfg, draw_paths(cfg, 40, 1))
        plan = SamplingPlan.random(cfg, 20, 40, 2)
        op = MeasurementOperator(cfg, plan)
        y = observe(sfg, plan, 0.0, 0).y0
        sol = ls_baseline(op, y, truth=sfg.entries)
        assert sol.state.residual_history[-1] < 1e-6 * np.linalg.norm(y)
        assert sol.relative_error > 0.5

    def test_min_norm(self):
        op = random_op(7)
        y = crandn(np.random.default_rng(5), op.shape[0])
        sol = ls_baseline(op, y)
        ref = np.linalg.pinv(op.to_dense()) @ y
        assert np.allclose(sol.x_hat, ref, atol=1e-8)


class TestSerialization:
    def test_json_and_csv(self, tmp_path):
        op = random_op(8)
        y = crandn(np.random.default_rng(6), op.shape[0])
        sol = dc_gomp(op, y, 2, 0.0, 3, truth=np.ones((8, 8)))
        d = json.loads(sol.to_json())
        assert d["support"] == sol.state.support
        assert len(d["residual_history"]) == 4
        assert d["relative_error"] == pytest.approx(sol.relative_error)
        sol.write_grid_csv(tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert len(lines) == 8
        first = lines[0].split('","')[0].strip('"')
        re, im = map(float, first.split(","))
        assert complex(re, im) == pytest.approx(sol.grid[0, 0])

    def test_default_epsilon(self):
        op = random_op(9)
        assert default_epsilon(op, 0.5) == pytest.approx(math.sqrt(30) * 0.5)


class TestCoherence:
    def test_orthonormal(self):
        rep = coherence_from_columns(np.eye(6), [np.arange(0, 3), np.arange(3, 6)])
        assert rep.mu == 0 and rep.subcoherence == 0 and rep.mu_group == 0

    def test_gamma_one(self):
        cols = crandn(np.random.default_rng(0), 5, 6)
        rep = coherence_from_columns(cols, [np.array([i]) for i in range(6)])
        assert rep.mu_group == pytest.approx(rep.mu, rel=1e-8)

    def test_toy_brute_force(self):
        rng = np.random.default_rng(1)
        cols = crandn(rng, 4, 6)
        groups = [np.array([0, 1]), np.array([2, 3]), np.array([4, 5])]
        rep = coherence_from_columns(cols, groups, L=1)
        U = cols / np.linalg.norm(cols, axis=0)
        mu = max(abs(np.vdot(U[:, i], U[:, j])) for i in range(6) for j in range(6) if i != j)
        nu = max(abs(np.vdot(U[:, g[0]], U[:, g[1]])) for g in groups)
        muj = max(np.linalg.svd(U[:, gi].conj().T @ U[:, gj], compute_uv=False)[0] / 2
                  for a, gi in enumerate(groups) for b, gj in enumerate(groups) if a < b)
        assert rep.mu == pytest.approx(mu, rel=1e-10)
        assert rep.subcoherence == pytest.approx(nu, rel=1e-10)
        assert rep.mu_group == pytest.approx(muj, rel=1e-6)
        assert rep.omp_condition_ok == (2 < (1 / mu + 1) / 2)
        assert rep.group_condition_ok == (2 < (1 / muj + 2 - nu / muj) / 2)

    def test_operator_report(self):
        op = random_op(10)
        rep = coherence_report(op, 4, L=1)
        assert isinstance(rep, CoherenceReport)
        assert 0 <= rep.mu <= 1 + 1e-12 and 0 <= rep.subcoherence <= 1 + 1e-12
        covered = np.sort(np.concatenate(rep.partition))
        assert np.array_equal(covered, np.arange(64))
        assert not rep.subsampled

    def test_subsampled(self):
        cfg = SystemConfig(M=32, K=32)
        op = MeasurementOperator(cfg, SamplingPlan.random(cfg, 8, 8, 0))
        rep = coherence_report(op, 8, max_columns=256)
        assert rep.subsampled and rep.n_columns <= 256
        rep2 = coherence_report(op, 8, max_columns=256)
        assert rep.mu == rep2.mu


class TestErrorBound:
    def test_reference_point(self):
        C0, C1 = error_bound_constants(ErrorBoundParams(0.0, 0.0, 1, 4, 1.0))
        assert C0 == pytest.approx(2 * (math.sqrt(2) + 1) / (math.sqrt(2) - 1), rel=1e-12)
        assert C0 == pytest.approx(11.65685424949238, rel=1e-12)
        assert C1 == pytest.approx(4 / (math.sqrt(2) - 1), rel=1e-12)

    def test_literal_c1(self):
        _, C1 = error_bound_constants(ErrorBoundParams(0.0, 0.0, 1, 4, 1.0), literal_c1=True)
        assert C1 == pytest.approx(2 / (math.sqrt(2) * 0.5 - 1), rel=1e-12)

    def test_monotone_in_delta_p(self):
        vals = [error_bound_constants(ErrorBoundParams(0.1, d, 1, 10, 1.0))[0] for d in (0.0, 0.1, 0.2, 0.3)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("params", [
        ErrorBoundParams(0.0, 0.0, 1, 2, 1.0),        # b^2 = 0
        ErrorBoundParams(0.9, 0.9, 1, 4, 1.0),        # denominator negative
        ErrorBoundParams(1.0, 0.0, 1, 4, 1.0),
        ErrorBoundParams(0.0, 0.0, 4, 4, 1.0),
    ])
    def test_infeasible(self, params):
        with pytest.raises(ValueError):
            error_bound_constants(params)

    def test_optimal_c_vs_grid(self):
        c, C0 = optimal_c(0.1, 0.2, 1, 10)
        hi = 1 / 0.1 - 1 - (math.sqrt(1.2) / math.sqrt(0.9)) ** 2
        grid = np.linspace(1e-6, hi - 1e-6, 200_001)
        vals = [error_bound_constants(ErrorBoundParams(0.1, 0.2, 1, 10, g))[0] for g in grid[::100]]
        j = int(np.argmin(vals)) * 100
        fine = grid[max(0, j - 100): j + 101]
        fvals = [error_bound_constants(ErrorBoundParams(0.1, 0.2, 1, 10, g))[0] for g in fine]
        assert C0 == pytest.approx(min(fvals), rel=1e-6)
        assert c == pytest.approx(fine[int(np.argmin(fvals))], abs=1e-3)

    @given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0.05, 2.0))
    def test_positive_iff_feasible(self, dk, dp, c):
        p = ErrorBoundParams(dk, dp, 1, 8, c)
        b2 = 8 - 1 - c
        feasible = b2 > 0 and math.sqrt(b2) * math.sqrt(1 - dk) > math.sqrt(1 + dp)
        if feasible:
            C0, C1 = error_bound_constants(p)
            assert C0 > 0 and C1 > 0
        else:
            with pytest.raises(ValueError):
                error_bound_constants(p)


def test_pipeline_smoke():
    cfg = SystemConfig(M=32, K=32, aperture_wavelengths=8.0)
    sfg = synthesize_sfg(cfg, draw_paths(cfg, 5, 0))
    plan = SamplingPlan.random(cfg, 16, 24, 1)
    sigma = noise_sigma_for_snr(sfg, plan, 20.0)
    op = MeasurementOperator(cfg, plan)
    obs = observe(sfg, plan, sigma, 2)
    sol = dc_gomp(op, obs.y0, 4, default_epsilon(op, sigma), 30, truth=sfg.entries)
    ls = ls_baseline(op, obs.y0, truth=sfg.entries)
    assert sol.relative_error < ls.relative_error
