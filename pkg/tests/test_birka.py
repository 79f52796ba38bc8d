import numpy as np
import pytest

from genlyap import IllPosedError, h2_norm_squared
from genlyap.als import AlsConfig
from genlyap.benchmarks import random_system
from genlyap.birka import (
    BirkaConfig,
    als_birka_pair,
    birka,
    gen_sylvester_solve,
    real_basis,
    reduced_h2_error_terms,
    reduced_operator_matrix,
)
from genlyap.galerkin import max_angle


def sylvester_defect(A, Lam, N_list, Nh_list, RHS, V):
    res = V @ Lam + A @ V + RHS
    for N, Nh in zip(N_list, Nh_list):
        res = res + N @ V @ Nh.T
    return np.linalg.norm(res) / np.linalg.norm(RHS)


def test_sylvester_k1_is_shifted_solve(rng):
    A = -np.diag(rng.uniform(1, 5, 6)) + 0.1 * rng.standard_normal((6, 6))
    rhs = rng.standard_normal((6, 1))
    V = gen_sylvester_solve(A, [[0.7]], (), (), rhs)
    assert np.allclose(V, -np.linalg.solve(A + 0.7 * np.eye(6), rhs), rtol=1e-12, atol=1e-14)


def test_sylvester_zero_rhs(rng):
    V = gen_sylvester_solve(-np.eye(4), np.eye(2), (), (), np.zeros((4, 2)))
    assert V.shape == (4, 2) and not np.any(V)


@pytest.mark.parametrize("complex_lam", [False, True])
def test_sylvester_random_residual(rng, complex_lam):
    A = rng.standard_normal((6, 6)) - 6 * np.eye(6)
    N = [0.3 * rng.standard_normal((6, 6))]
    Lam = np.diag([1.0 + 0.5j, 1.0 - 0.5j]) if complex_lam else rng.standard_normal((2, 2)) + 2 * np.eye(2)
    Nh = [0.2 * rng.standard_normal((2, 2))]
    RHS = rng.standard_normal((6, 2))
    V = gen_sylvester_solve(A, Lam, N, Nh, RHS)
    assert sylvester_defect(A, Lam, N, Nh, RHS, V) <= 1e-9


def test_sylvester_large_path_matches_dense(rng, monkeypatch):
    import genlyap.birka as mod

    A = rng.standard_normal((8, 8)) - 8 * np.eye(8)
    N = [0.3 * rng.standard_normal((8, 8))]
    Lam, Nh, RHS = np.diag([1.0, 2.0, 3.0]), [0.1 * rng.standard_normal((3, 3))], rng.standard_normal((8, 3))
    dense = gen_sylvester_solve(A, Lam, N, Nh, RHS)
    monkeypatch.setattr(mod, "DENSE_SYLVESTER_MAX", 0)
    sparse = gen_sylvester_solve(A, Lam, N, Nh, RHS)
    assert np.allclose(dense, sparse, rtol=1e-10, atol=1e-13)


def test_sylvester_singular_raises():
    with pytest.raises(IllPosedError):
        gen_sylvester_solve(-np.eye(3), np.diag([1.0, 2.0]), (), (), np.ones((3, 2)))


def test_real_basis_of_conjugate_pair(rng):
    z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    Q = real_basis(np.column_stack([z, z.conj()]), 2)
    assert Q.dtype == float
    assert np.allclose(Q.T @ Q, np.eye(2), atol=1e-14)
    assert max_angle(Q, np.column_stack([z.real, z.imag])) <= 1e-12


def test_rank1_transformation_steps_are_no_ops(sym12):
    res = birka(sym12.with_B(sym12.B, sym12.B.T), cfg=BirkaConfig(k=1, tol=1e-10))
    for step in res.trace:
        assert step["B_change"] == 0.0 and step["C_change"] == 0.0 and step["N_change"] == 0.0


def test_symmetric_start_gives_equal_bases(sym12):
    sys = sym12.with_B(sym12.B, sym12.B.T)
    for k in (1, 2, 3):
        res = birka(sys, cfg=BirkaConfig(k=k, tol=1e-10, seed=k))
        assert res.converged
        assert max(step["V_W_angle"] for step in res.trace) <= 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_rank1_birka_matches_symmetric_als(seed):
    sys = random_system(20, m=2, r=2, seed=seed, contraction=0.6)
    v0 = np.random.default_rng(seed).standard_normal(20)
    cfg = AlsConfig(tol=1e-8, max_inner_iters=100)
    als, bk = als_birka_pair(sys, v0, cfg)
    assert als.iterations == bk.iterations
    assert max_angle(als.v.reshape(-1, 1), bk.V) <= 1e-8


def test_nonconvergence_is_flagged(sym12):
    res = birka(sym12, cfg=BirkaConfig(k=3, tol=1e-15, max_iters=2))
    assert not res.converged and res.iterations == 2
    assert len(res.changes) == 2


def test_h2_terms_full_space_vanish():
    sys = random_system(8, m=1, r=1, seed=2, contraction=0.5)
    t = reduced_h2_error_terms(sys, np.eye(8))
    assert abs(t.m_norm_error_sq) <= 1e-12 * t.h2_full_sq
    assert abs(t.h2_full_sq - t.h2_reduced_sq) <= 1e-12 * t.h2_full_sq
    assert abs(t.h2_error_system_sq) <= 1e-8 * t.h2_full_sq


@pytest.mark.parametrize("seed", range(6))
def test_energy_error_identity_and_h2_bound(seed):
    sys = random_system(15, m=2, r=2, seed=seed, contraction=0.6)
    rng = np.random.default_rng(seed)
    k = 1 + seed % 5
    V = np.linalg.qr(rng.standard_normal((15, k)))[0]
    t = reduced_h2_error_terms(sys, V)
    diff = t.h2_full_sq - t.h2_reduced_sq
    assert t.m_norm_error_sq == pytest.approx(diff, rel=1e-8)
    assert t.h2_error_system_sq <= diff + 1e-10
    assert t.h2_full_sq == pytest.approx(h2_norm_squared(sys), rel=1e-12)


def test_h2_bound_is_tight_at_birka_fixed_point():
    sys = random_system(15, m=2, r=2, seed=11, contraction=0.6)
    sys = sys.with_B(sys.B, sys.B.T)
    for k in (1, 2, 3):
        res = birka(sys, cfg=BirkaConfig(k=k, tol=1e-12, max_iters=300))
        assert res.converged
        t = reduced_h2_error_terms(sys, res.V)
        assert abs(t.gap) <= 1e-6 * t.h2_full_sq


def test_reduced_operator_is_spd(rng):
    sys = random_system(10, m=2, r=1, seed=4, contraction=0.7)
    for k in (1, 2, 4):
        V = np.linalg.qr(rng.standard_normal((10, k)))[0]
        M = reduced_operator_matrix(sys, V)
        assert np.allclose(M, M.T, atol=1e-12 * np.linalg.norm(M))
        assert np.linalg.eigvalsh(M).min() > 0


def test_nonsymmetric_run_returns_real_bases(nonsym10):
    res = birka(nonsym10, cfg=BirkaConfig(k=3, tol=1e-6))
    assert res.V.dtype == float and res.W.dtype == float
    assert np.allclose(res.V.T @ res.V, np.eye(3), atol=1e-12)
    assert all(c < 1e14 for c in res.conditions)
