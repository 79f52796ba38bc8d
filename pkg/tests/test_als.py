import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genlyap import direct_solve, m_inner
from genlyap.als import (
    AlsConfig,
    als_greedy,
    als_objective,
    als_rank1,
    scalar_identity_defect,
    stationarity_residual,
)
from genlyap.benchmarks import random_system
from genlyap.core import psd_slack, psd_within, residual_psd_slack
from genlyap.galerkin import max_angle

from conftest import scalar


def test_objective_zero_vector(sym12):
    assert als_objective(sym12, sym12.BBt, np.zeros(12), np.ones(12)) == 0.0


def test_objective_scalar():
    sys = scalar(-1.0)
    assert als_objective(sys, np.array([[1.0]]), [1.0], [1.0]) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_objective_matches_energy_inner_product(seed):
    sys = random_system(8, m=2, r=2, seed=seed % 1000, contraction=0.7)
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal(8), rng.standard_normal(8)
    P = np.outer(v, w)
    ref = m_inner(sys, P, P) - 2.0 * np.trace(np.outer(w, v) @ sys.BBt)
    assert als_objective(sys, sys.BBt, v, w) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_symmetric_start_keeps_v_equal_w(sym12):
    v0 = np.random.default_rng(0).standard_normal(12)
    out = als_rank1(sym12, sym12.BBt, v0, cfg=AlsConfig(tol=1e-10, max_inner_iters=100))
    assert out.converged and max(out.vw_gaps) == 0.0
    assert np.array_equal(out.v, out.w)


def test_two_vector_sweeps_close_the_v_w_gap(sym12):
    # v is solved from the old w and w from the new v, so v = w only in the limit
    v0 = np.random.default_rng(0).standard_normal(12)
    out = als_rank1(sym12, sym12.BBt, v0, v0, AlsConfig(tol=1e-13, max_inner_iters=500, symmetric=False))
    assert out.converged
    assert out.vw_gaps[-1] <= 1e-6
    assert np.all(np.diff(out.vw_gaps) <= 1e-15)
    sym = als_rank1(sym12, sym12.BBt, v0, cfg=AlsConfig(tol=1e-13, max_inner_iters=500))
    assert max_angle(out.v.reshape(-1, 1), sym.v.reshape(-1, 1)) <= 1e-6


def test_zero_residual_is_degenerate(sym12):
    for sym in (True, False):
        out = als_rank1(sym12, np.zeros((12, 12)), np.ones(12), cfg=AlsConfig(symmetric=sym))
        assert out.degenerate and not out.converged
        assert not np.any(out.v) and not np.any(out.w)


def test_balanced_output_norms(nonsym10):
    out = als_rank1(nonsym10, nonsym10.BBt, np.ones(10), cfg=AlsConfig(symmetric=False, tol=1e-10, max_inner_iters=200))
    assert np.linalg.norm(out.v) == pytest.approx(np.linalg.norm(out.w), rel=1e-12)


@pytest.mark.parametrize("symmetric", [True, False])
def test_converged_output_is_stationary(sym12, symmetric):
    cfg = AlsConfig(tol=1e-12, max_inner_iters=1000, symmetric=symmetric)
    out = als_rank1(sym12, sym12.BBt, np.ones(12), cfg=cfg)
    assert out.converged
    assert stationarity_residual(sym12, sym12.BBt, out.v) <= 1e-6
    assert scalar_identity_defect(sym12, sym12.BBt, out.v) <= 1e-6


def test_objective_is_locally_minimal_at_converged_pair(sym12):
    cfg = AlsConfig(tol=1e-13, max_inner_iters=2000, symmetric=False)
    out = als_rank1(sym12, sym12.BBt, np.ones(12), cfg=cfg)
    J0 = als_objective(sym12, sym12.BBt, out.v, out.w)
    rng = np.random.default_rng(5)
    for _ in range(20):
        dv, dw = 1e-4 * rng.standard_normal(12), 1e-4 * rng.standard_normal(12)
        assert als_objective(sym12, sym12.BBt, out.v + dv, out.w + dw) >= J0 - 1e-10 * abs(J0)


@pytest.mark.parametrize("seed", range(5))
def test_local_minimum_from_random_start_is_symmetric_psd(seed):
    sys = random_system(15, m=2, r=2, seed=100 + seed, contraction=0.6)
    rng = np.random.default_rng(seed)
    cfg = AlsConfig(tol=1e-13, max_inner_iters=3000, symmetric=False)
    out = als_rank1(sys, sys.BBt, rng.standard_normal(15), rng.standard_normal(15), cfg)
    assert out.converged
    assert max_angle(out.v.reshape(-1, 1), out.w.reshape(-1, 1)) <= 1e-6
    assert out.v @ out.w > 0


def test_greedy_zero_rhs_stops_at_zero():
    sys = random_system(6, m=1, seed=0).with_B(np.zeros((6, 1)))
    res = als_greedy(sys)
    assert res.report.status == "converged"
    assert res.report.dims == [0]
    assert not np.any(res.approximation())


@pytest.mark.parametrize("mode", ["subspace", "rank1"])
@pytest.mark.parametrize("nu,expected", [(None, 0.5), (0.5, 4.0 / 7.0)])
def test_greedy_scalar(mode, nu, expected):
    res = als_greedy(scalar(-1.0, nu), AlsConfig(mode=mode, tol=1e-14, max_inner_iters=200, max_outer_ranks=40))
    assert res.approximation()[0, 0] == pytest.approx(expected, rel=1e-8)


def test_rank1_chain_on_heat_is_psd_and_monotone(heat8):
    X = direct_solve(heat8)
    cfg = AlsConfig(tol=1e-12, max_inner_iters=500, mode="rank1", max_outer_ranks=12)
    res = als_greedy(heat8, cfg, X_ref=X, keep_iterates=True)
    norms = [np.linalg.norm(R) for R in res.residuals]
    for k, (Xk, Rk) in enumerate(zip(res.iterates, res.residuals)):
        assert np.allclose(Rk, Rk.T, atol=1e-12 * max(norms[k], 1e-300))
        nX = np.linalg.norm(X)
        assert psd_within(Rk, residual_psd_slack(heat8, Xk, Rk))
        assert psd_within(X - Xk, psd_slack(X - Xk, nX))
        if k:
            assert psd_within(Xk - res.iterates[k - 1], psd_slack(Xk - res.iterates[k - 1], nX))
            assert norms[k] <= norms[k - 1] * (1 + 1e-10)
    assert np.all(np.diff(res.report.rel_errors) <= 1e-12)


def test_subspace_greedy_converges_on_heat(heat8):
    X = direct_solve(heat8)
    res = als_greedy(heat8, AlsConfig(stop_tol=1e-8, max_outer_ranks=40), X_ref=X)
    assert res.report.status == "converged"
    assert res.report.rel_errors[-1] < 1e-6
    assert res.report.dims == list(range(len(res.report.dims)))


def test_greedy_runs_on_nonsymmetric(nonsym10):
    res = als_greedy(nonsym10, AlsConfig(stop_tol=1e-8, max_outer_ranks=10))
    assert res.report.final_rel_residual <= 1e-8 or res.report.status == "max_dim"
    assert res.report.rel_residuals[-1] < res.report.rel_residuals[0]
