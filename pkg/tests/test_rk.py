import numpy as np
import pytest

from genlyap import BilinearSystem, IllPosedError, direct_solve, residual
from genlyap.benchmarks import heat2d, random_system
from genlyap.core import dominant_left_singular_vectors
from genlyap.galerkin import SubspaceBasis, extend_orthonormal, galerkin_solve, max_angle, orth
from genlyap.rk import (
    GreedyResidual,
    Prescribed,
    RitzRational,
    _greedy_objective,
    _hull_boundary,
    birka_shifts,
    expand_with_shift,
    invariant_subspace_instance,
    mirror,
    rational_krylov_basis,
    rk_solve,
    shift_greedy,
    shift_ritz,
    spectral_interval,
    tangential_directions,
    variant,
    check_residual_span,
)


def basis_of(V):
    return extend_orthonormal(SubspaceBasis.empty(V.shape[0]), V)[0]


# ---------------------------------------------------------------- shift rules


def test_greedy_empty_basis_takes_left_end(nonsym10):
    choice = shift_greedy(nonsym10, SubspaceBasis.empty(10), np.ones(10), (2.0, 9.0), grid=50)
    assert choice.sigma == 2.0 and not choice.degenerate


def test_greedy_objective_closed_form_on_diagonal():
    A = np.diag([-1.0, -10.0])
    V = np.array([[1.0], [0.0]])
    r = np.array([0.6, 0.8])
    s = np.linspace(0.5, 12.0, 7)
    vals = _greedy_objective(A @ V, V, V.T @ A @ V, r, s)
    # span(V) is invariant, so only the e2 part of r survives
    assert np.allclose(vals, 0.8, rtol=1e-14)


def test_greedy_grid_matches_fine_grid(rng):
    A = -np.diag(rng.uniform(1, 20, 8)) + 0.5 * rng.standard_normal((8, 8))
    sys = BilinearSystem(A, (), np.ones((8, 1)))
    V = orth(rng.standard_normal((8, 2)))
    r = rng.standard_normal(8)
    lo, hi = spectral_interval(A)
    choice = shift_greedy(sys, V, r, (lo, hi), grid=200)
    fine = np.linspace(lo, hi, 10_000)
    vals = _greedy_objective(A @ V, V, V.T @ A @ V, r, fine)
    coarse_val = _greedy_objective(A @ V, V, V.T @ A @ V, r, [choice.sigma.real])[0]
    assert abs(choice.sigma.real - fine[np.nanargmax(vals)]) <= (hi - lo) / 199 or coarse_val >= np.nanmax(vals) * (1 - 1e-3)


def test_greedy_degenerate_when_objective_vanishes():
    A = np.diag([-1.0, -2.0, -3.0])
    sys = BilinearSystem(A, (), np.ones((3, 1)))
    V = np.eye(3)[:, :2]
    choice = shift_greedy(sys, V, np.array([1.0, 1.0, 0.0]), (0.5, 3.5))
    assert choice.degenerate and choice.sigma == 0.5


def test_ritz_single_value_is_mirrored():
    lam = -2.0 + 3.0j
    assert shift_ritz([lam]) == mirror([lam])[0] == 2.0 + 3.0j


def test_ritz_real_spectrum_gives_real_shift(rng):
    s = shift_ritz(-rng.uniform(1, 10, 6), used_shifts=[3.0])
    assert s.imag == 0.0 and s.real > 0


def test_ritz_refinement(rng):
    M = rng.standard_normal((8, 8)) - 4 * np.eye(8)
    ritz = np.linalg.eigvals(M)
    used = [1.5, 2.0 + 1.0j, 2.0 - 1.0j]
    coarse = shift_ritz(ritz, used, samples=500)
    fine = shift_ritz(ritz, used, samples=5000)
    z = _hull_boundary(mirror(ritz), 500)
    spacing = np.max(np.abs(np.diff(z)))
    assert abs(coarse - fine) <= spacing * (1 + 1e-9)


def test_ritz_needs_values():
    with pytest.raises(ValueError):
        shift_ritz([])


# ---------------------------------------------------------------- directions and expansion


def test_tangential_rank_one_residual_returns_its_vector(rng):
    n = 10
    A = -np.diag(rng.uniform(1, 5, n))
    sys = BilinearSystem(A, (), np.ones((n, 1)))
    V = np.eye(n)[:, :3]
    u = np.zeros(n)
    u[5:] = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    d = tangential_directions(sys, V, np.outer(u, u), 2.0, 1)
    assert abs(abs(d[:, 0] @ u) - 1.0) <= 1e-12


def test_tangential_matches_dense_svd(heat8):
    basis = basis_of(np.asarray(heat8.B))
    sol = galerkin_solve(heat8, basis)
    R = residual(heat8, sol.approximation())
    V, sigma = basis.V, 37.0
    A = heat8.A_dense
    Ak = V.T @ A @ V
    defl = R - (A - sigma * np.eye(64)) @ V @ np.linalg.solve(Ak - sigma * np.eye(V.shape[1]), V.T @ R)
    d = tangential_directions(heat8, basis, R, sigma, 1)
    assert max_angle(d, np.linalg.svd(defl)[0][:, :1]) <= 1e-10


def test_tangential_large_shift_limit(heat8):
    basis = basis_of(np.asarray(heat8.B))
    R = residual(heat8, galerkin_solve(heat8, basis).approximation())
    V = basis.V
    limit = dominant_left_singular_vectors(R - V @ (V.T @ R), 1)
    d = tangential_directions(heat8, basis, R, 1e9, 1)
    assert max_angle(d, limit) <= 1e-3


def test_expand_zero_shift_appends_inverse_image(nonsym10):
    basis, kept = expand_with_shift(nonsym10, SubspaceBasis.empty(10), nonsym10.B, 0.0)
    assert kept == 1
    assert max_angle(basis.V, np.linalg.solve(nonsym10.A, nonsym10.B)) <= 1e-12


def test_expand_complex_shift_matches_complex_span(nonsym10):
    start = basis_of(np.asarray(nonsym10.B))
    d = np.arange(1.0, 11.0)
    sigma = 2.0 + 1.5j
    basis, kept = expand_with_shift(nonsym10, start, d, sigma)
    assert kept == 2 and basis.V.dtype == float
    z = np.linalg.solve(nonsym10.A - sigma * np.eye(10), d)
    ref = orth(np.column_stack([start.V, z.real, z.imag]))
    assert max_angle(basis.V, ref) <= 1e-10


def test_expand_at_eigenvalue_raises():
    sys = BilinearSystem(np.diag([-1.0, -2.0]), (), np.ones((2, 1)))
    with pytest.raises(IllPosedError):
        expand_with_shift(sys, SubspaceBasis.empty(2), np.ones(2), -1.0)


# ---------------------------------------------------------------- solver


def test_zero_rhs_converges_immediately(nonsym10):
    res = rk_solve(nonsym10.with_B(np.zeros((10, 1))), variant("A"))
    assert res.report.status == "converged"
    assert not np.any(res.solution.approximation())


def test_linear_low_rank_solution_is_recovered():
    A, b = invariant_subspace_instance(30, 3, seed=2)
    sys = BilinearSystem(A, (), b.reshape(-1, 1))
    res = rk_solve(sys, variant("A"), stop_tol=1e-9, max_dim=10)
    assert res.report.status == "converged"
    assert res.report.final_rel_residual <= 1e-9
    X = direct_solve(sys)
    assert np.linalg.norm(res.solution.approximation() - X) <= 1e-8 * np.linalg.norm(X)


@pytest.mark.parametrize("label", ["A", "B", "C", "D", "E"])
def test_variants_keep_orthonormal_basis_and_galerkin_condition(heat8, label):
    res = rk_solve(heat8, variant(label), stop_tol=1e-8, max_dim=20)
    V = res.basis.V
    assert np.linalg.norm(V.T @ V - np.eye(V.shape[1])) <= 1e-9
    R = residual(heat8, res.solution.approximation())
    assert np.linalg.norm(V.T @ R @ V) <= 1e-9 * np.linalg.norm(heat8.BBt)
    assert np.all(np.diff(res.report.dims) > 0)


def test_variant_a_on_heat(heat8):
    res = rk_solve(heat8, variant("A"), stop_tol=1e-6, max_dim=30)
    assert res.report.status == "converged"


def test_variant_e_stagnates_on_heat(heat8):
    res = rk_solve(heat8, variant("E"), stop_tol=1e-10, max_dim=64)
    assert res.report.status == "stagnation"
    assert res.report.info["stagnation_dim"] == res.report.dims[-1] < 64


def test_variant_records():
    a = variant("A")
    assert not a.tangential and isinstance(a.rule, GreedyResidual) and a.direction == "residual"
    assert variant("B").tangential and isinstance(variant("B").rule, GreedyResidual)
    assert isinstance(variant("C").rule, RitzRational) and not variant("C").tangential
    assert isinstance(variant("D").rule, RitzRational) and variant("D").tangential
    assert variant("E").direction == "rhs"
    f = variant("F", [3.0, 1.0 + 2.0j, 1.0 - 0.5j, 2.0])
    assert isinstance(f.rule, Prescribed)
    assert [z.real for z in f.rule.shifts] == sorted(z.real for z in f.rule.shifts)
    with pytest.raises(ValueError):
        variant("F")
    with pytest.raises(ValueError):
        variant("G")


def test_variant_e_ignores_the_residual(heat8, monkeypatch):
    import genlyap.rk as mod

    def boom(*a, **k):
        raise AssertionError("residual singular vectors requested")

    monkeypatch.setattr(mod, "dominant_left_singular_vectors", boom)
    rk_solve(heat8, variant("E"), max_dim=8)


def test_birka_shifts_for_variant_f(heat8):
    shifts, res = birka_shifts(heat8, k=6)
    assert res.converged
    assert all(z.real > 0 for z in shifts)
    assert list(shifts) == sorted(shifts, key=lambda z: (z.real, z.imag))
    out = rk_solve(heat8, variant("F", shifts), stop_tol=1e-6, max_dim=30)
    assert out.report.status == "converged"


def test_variant_e_matches_classical_rational_krylov():
    sys = random_system(25, m=0, r=1, seed=4, symmetric=False)
    res = rk_solve(sys, variant("E"), stop_tol=1e-12, max_dim=10)
    shifts = [s for s in res.shifts if s.imag >= 0]
    ref = rational_krylov_basis(sys.A, sys.B, shifts, continuation=False)
    assert ref.shape == res.basis.V.shape
    assert max_angle(res.basis.V, ref) <= 1e-9
    # against the rational Arnoldi basis while the columns are well conditioned
    short = rk_solve(sys, variant("E"), stop_tol=1e-12, max_dim=5)
    arnoldi = rational_krylov_basis(sys.A, sys.B, [s for s in short.shifts if s.imag >= 0])
    assert max_angle(short.basis.V, arnoldi) <= 1e-9


# ---------------------------------------------------------------- residual span checks


@pytest.mark.parametrize("seed", range(5))
def test_span_relations_in_linear_case(seed):
    sys = random_system(30 + 2 * seed, m=0, r=1, seed=seed, symmetric=False)
    shifts = np.random.default_rng(seed).uniform(0.5, 15.0, 5)
    rep = check_residual_span(sys.A, sys.B[:, 0], list(shifts))
    assert rep.max_containment <= 1e-9
    assert rep.max_factorization_defect <= 1e-9
    assert max(s.residual_space_angle for s in rep.steps) <= 1e-9
    for s in rep.steps:
        if s.residual_rel > 1e-9:
            assert s.containment_current > 1e-9


def test_range_in_current_space_forces_zero_residual():
    A, b = invariant_subspace_instance(30, 3, seed=1)
    rep = check_residual_span(A, b, [1.0, 2.0, 3.0, 4.0])
    # the basis is invariant after two shifts
    assert rep.steps[2].containment_current == 0.0
    assert all(s.residual_rel <= 1e-9 for s in rep.steps[2:])


def test_span_relation_fails_with_bilinear_term():
    sys = random_system(30, m=1, r=1, seed=0, symmetric=False, contraction=0.5)
    rep = check_residual_span(sys.A, sys.B[:, 0], [1.0, 3.0, 6.0], sys.N_list)
    assert rep.max_containment > 1e-3


def test_rational_krylov_basis_skips_repeats(nonsym10):
    a = rational_krylov_basis(nonsym10.A, nonsym10.B, [1.0, 2.0, 1.0])
    b = rational_krylov_basis(nonsym10.A, nonsym10.B, [1.0, 2.0])
    assert a.shape == b.shape == (10, 3)
    assert max_angle(a, b) <= 1e-12


def test_spectral_interval_requires_stability():
    with pytest.raises(IllPosedError):
        spectral_interval(np.diag([-1.0, 0.5]))


def test_heat_interval_brackets_mirrored_spectrum():
    A = heat2d(6).A_dense
    lo, hi = spectral_interval(A)
    ev = -np.linalg.eigvalsh(A)
    assert lo < ev.min() and hi > ev.max()
