import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genlyap import direct_solve, residual
from genlyap.galerkin import (
    SubspaceBasis,
    containment,
    extend_orthonormal,
    factored_residual,
    galerkin_residual,
    galerkin_solve,
    orth,
    project,
    residual_norm,
    residual_operator,
    svd_baseline_errors,
    svd_best_rank,
)

from conftest import rand_sym


def test_extend_orthonormal_drops_dependent_columns(rng):
    b = SubspaceBasis.empty(6)
    C = rng.standard_normal((6, 3))
    C = np.column_stack([C, C[:, 0] + 2 * C[:, 1], np.zeros(6)])
    b2, kept = extend_orthonormal(b, C)
    assert kept == 3 and b2.k == 3
    assert b2.orthonormality_error() < 1e-14
    b3, kept = extend_orthonormal(b2, C[:, :2])
    assert kept == 0 and b3.k == 3
    assert b.k == 0  # original untouched


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 40), k=st.integers(1, 12))
def test_extend_orthonormal_keeps_orthonormality(seed, n, k):
    rng = np.random.default_rng(seed)
    scales = 10.0 ** rng.uniform(-6, 6, size=k)
    M = rng.standard_normal((n, k)) * scales
    V = orth(M)
    assert V.shape[1] <= min(n, k)
    assert np.linalg.norm(V.T @ V - np.eye(V.shape[1])) <= 1e-12 * max(1, V.shape[1])


def test_galerkin_orthogonality(sym12, nonsym10, rng):
    for s in (sym12, nonsym10):
        V = orth(rng.standard_normal((s.n, 4)))
        sol = galerkin_solve(s, SubspaceBasis(V))
        R = residual(s, sol.approximation())
        assert np.linalg.norm(V.T @ R @ V) <= 1e-9 * np.linalg.norm(R)


def test_full_subspace_recovers_solution(sym12):
    V = np.eye(sym12.n)
    sol = galerkin_solve(sym12, SubspaceBasis(V))
    X = direct_solve(sym12)
    assert np.linalg.norm(sol.approximation() - X) <= 1e-10 * np.linalg.norm(X)


def test_factored_residual_matches_dense(sym12, nonsym10, rng):
    for s in (sym12, nonsym10):
        V = orth(rng.standard_normal((s.n, 3)))
        sol = galerkin_solve(s, SubspaceBasis(V))
        R, F = galerkin_residual(s, sol)
        assert np.linalg.norm(F.to_dense() - R) <= 1e-12 * np.linalg.norm(R)
        assert F.fro_norm() == pytest.approx(np.linalg.norm(R), rel=1e-10)
        assert residual_norm(s, sol) == pytest.approx(np.linalg.norm(R), rel=1e-12)
        op = residual_operator(s, sol)
        x = rng.standard_normal(s.n)
        assert np.allclose(op @ x, R @ x)
        assert np.allclose(op.rmatvec(x), R.T @ x)


def test_empty_basis_residual_is_bbt(sym12):
    sol = galerkin_solve(sym12, SubspaceBasis.empty(sym12.n))
    R, F = galerkin_residual(sym12, sol)
    assert np.allclose(R, sym12.B @ sym12.B.T)
    assert np.allclose(F.to_dense(), R)


def test_projection_of_symmetric_system_is_symmetric(sym12, rng):
    V = orth(rng.standard_normal((sym12.n, 5)))
    p = project(sym12, V)
    assert np.array_equal(p.A_k, p.A_k.T)
    assert all(np.array_equal(N, N.T) for N in p.N_list_k)


def test_svd_baselines(rng):
    X = rand_sym(rng, 8)
    F = svd_best_rank(X, 3)
    err = np.linalg.norm(X - F.to_dense()) / np.linalg.norm(X)
    assert svd_baseline_errors(X, [3])[0] == pytest.approx(err, rel=1e-10)
    assert svd_baseline_errors(X, [0, 8]) == pytest.approx([1.0, 0.0])


def test_containment():
    V = np.eye(4)[:, :2]
    assert containment(np.eye(4)[:, :1], V) == 0.0
    assert containment(np.eye(4)[:, 3:], V) == pytest.approx(1.0)
