"""Seeded property suite over small random and benchmark instances.

Every check returns the worst observed value of its metric and passes when
that value is at most the check's threshold. Keys describe the property;
``run_suite`` evaluates all of them for one seed.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import core
from .als import AlsConfig, als_greedy, als_rank1, scalar_identity_defect, stationarity_residual
from .benchmarks import fokker_planck_raw, heat2d, random_system
from .birka import BirkaConfig, als_birka_pair, birka, gen_sylvester_solve, reduced_h2_error_terms, reduced_operator_matrix
from .fixed_point import FixedPointConfig, fixed_point_solve
from .galerkin import SubspaceBasis, galerkin_solve, max_angle, orth
from .rk import rational_krylov_basis, rk_solve, variant, check_residual_span, invariant_subspace_instance


@dataclass(frozen=True)
class PropertyResult:
    key: str
    description: str
    passed: bool
    worst: float
    threshold: float
    seconds: float = 0.0
    error: str = ""


PROPERTIES = {}


def prop(key, description, threshold):
    def register(fn):
        PROPERTIES[key] = (description, threshold, fn)
        return fn

    return register


def _seeds(seed, count):
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)]


def _sym_instances(seed, count=3, n=12, m=2, r=2, contraction=0.6):
    return [random_system(n, m=m, r=r, seed=s, contraction=contraction) for s in _seeds(seed, count)]


def _psd_violation(M, slack):
    """How far the smallest eigenvalue of M falls below -slack, relative to slack (0 if none)."""
    lo = float(np.linalg.eigvalsh(core.symmetrize(M))[0])
    return max(0.0, -lo - slack) / slack if slack > 0 else max(0.0, -lo)


# ---------------------------------------------------------------- operators and oracle


@prop("oracle-residual", "direct solve has relative residual <= 1e-10", 1e-10)
def _oracle_residual(seed):
    worst = 0.0
    for i, s in enumerate(_seeds(seed, 4)):
        sys = random_system(8 + 5 * i, m=1 + i % 2, r=1 + i % 2, seed=s, symmetric=bool(i % 2), contraction=0.7)
        worst = max(worst, core.relative_residual(sys, core.direct_solve(sys)))
    return worst


@prop("kronecker-matches-operators", "vec(L(X) + Pi(X)) equals the Kronecker matrix times vec(X)", 1e-12)
def _kron(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(7, m=2, seed=seed, symmetric=False)
    X = rng.standard_normal((7, 7))
    lhs = core.vec(core.apply_lyap(sys, X) + core.apply_pi(sys, X))
    rhs = core.kron_operator(sys) @ core.vec(X)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


@prop("pi-preserves-psd", "Pi maps PSD matrices to PSD matrices", 0.0)
def _pi_psd(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sys in _sym_instances(seed, 2):
        G = rng.standard_normal((sys.n, 3))
        P = G @ G.T
        worst = max(worst, _psd_violation(core.apply_pi(sys, P), core.psd_slack(P, np.linalg.norm(P))))
    return worst


@prop("galerkin-orthogonality", "V^T R V = 0 for the Galerkin residual", 1e-10)
def _galerkin(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sys in _sym_instances(seed, 2):
        V = orth(rng.standard_normal((sys.n, 4)))
        sol = galerkin_solve(sys, SubspaceBasis(V))
        R = core.residual(sys, sol.approximation())
        worst = max(worst, float(np.linalg.norm(V.T @ R @ V) / np.linalg.norm(sys.BBt)))
    return worst


# ---------------------------------------------------------------- ALS


@prop("als-residual-chain-psd", "rank-1 ALS residuals R_k stay symmetric PSD", 0.0)
def _als_chain(seed):
    worst = 0.0
    cfg = AlsConfig(tol=1e-12, max_inner_iters=500, mode="rank1", max_outer_ranks=5)
    for sys in _sym_instances(seed, 2) + [heat2d(5)]:
        res = als_greedy(sys, cfg, keep_iterates=True)
        for Xk, Rk in zip(res.iterates, res.residuals):
            worst = max(worst, _psd_violation(Rk, core.residual_psd_slack(sys, Xk, Rk)))
    return worst


@prop("als-monotone-approximations", "rank-1 ALS iterates increase in the PSD order towards X", 0.0)
def _als_monotone(seed):
    worst = 0.0
    cfg = AlsConfig(tol=1e-12, max_inner_iters=500, mode="rank1", max_outer_ranks=5)
    for sys in _sym_instances(seed, 2):
        X = core.direct_solve(sys)
        nX = np.linalg.norm(X)
        res = als_greedy(sys, cfg, keep_iterates=True)
        its = res.iterates
        for k, Xk in enumerate(its):
            worst = max(worst, _psd_violation(X - Xk, core.psd_slack(X - Xk, nX)))
            if k:
                D = Xk - its[k - 1]
                worst = max(worst, _psd_violation(D, core.psd_slack(D, nX)))
    return worst


@prop("als-stationarity", "converged rank-1 ALS output satisfies the first-order conditions", 1e-6)
def _als_stationary(seed):
    worst = 0.0
    cfg = AlsConfig(tol=1e-12, max_inner_iters=2000)
    for sys in _sym_instances(seed, 2):
        out = als_rank1(sys, sys.BBt, np.random.default_rng(seed).standard_normal(sys.n), cfg=cfg)
        worst = max(worst, stationarity_residual(sys, sys.BBt, out.v), scalar_identity_defect(sys, sys.BBt, out.v))
    return worst


@prop("als-local-minimum-symmetric", "two-vector ALS from random starts ends with v parallel to w", 1e-6)
def _als_local_min(seed):
    worst = 0.0
    cfg = AlsConfig(tol=1e-13, max_inner_iters=3000, symmetric=False)
    rng = np.random.default_rng(seed)
    for sys in _sym_instances(seed, 2):
        out = als_rank1(sys, sys.BBt, rng.standard_normal(sys.n), rng.standard_normal(sys.n), cfg)
        angle = max_angle(out.v.reshape(-1, 1), out.w.reshape(-1, 1))
        worst = max(worst, angle if out.v @ out.w > 0 else np.inf)
    return worst


# ---------------------------------------------------------------- BIRKA


@prop("sylvester-residual", "generalized Sylvester solves have relative residual <= 1e-9", 1e-9)
def _sylvester(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6)) - 6 * np.eye(6)
    N = [0.3 * rng.standard_normal((6, 6))]
    Lam = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    Nh = [0.2 * rng.standard_normal((2, 2))]
    RHS = rng.standard_normal((6, 2))
    V = gen_sylvester_solve(A, Lam, N, Nh, RHS)
    res = V @ Lam + A @ V + N[0] @ V @ Nh[0].T + RHS
    return float(np.linalg.norm(res) / np.linalg.norm(RHS))


@prop("birka-rank1-equals-als", "rank-1 BIRKA and symmetric ALS agree (angle, iteration count)", 1e-8)
def _birka_als(seed):
    worst = 0.0
    for sys in _sym_instances(seed, 3, n=15):
        v0 = np.random.default_rng(seed).standard_normal(sys.n)
        r1, b = als_birka_pair(sys, v0, AlsConfig(tol=1e-8, max_inner_iters=100))
        if r1.iterations != b.iterations:
            return np.inf
        worst = max(worst, max_angle(r1.v.reshape(-1, 1), b.V))
    return worst


@prop("birka-symmetric-start", "BIRKA from V0 = W0 on a symmetric system keeps V = W", 1e-8)
def _birka_sym(seed):
    worst = 0.0
    for k, sys in enumerate(_sym_instances(seed, 2), start=1):
        res = birka(sys.with_B(sys.B, sys.B.T), cfg=BirkaConfig(k=k + 1, tol=1e-8, seed=seed))
        worst = max(worst, max(t["V_W_angle"] for t in res.trace))
    return worst


@prop("energy-error-equals-h2-gap", "||X - V Y V^T||_M^2 equals ||S||^2 - ||S_r||^2 (relative)", 1e-8)
def _h2_identity(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, sys in enumerate(_sym_instances(seed, 3), start=1):
        V = orth(rng.standard_normal((sys.n, k)))
        t = reduced_h2_error_terms(sys, V)
        diff = t.h2_full_sq - t.h2_reduced_sq
        worst = max(worst, abs(t.m_norm_error_sq - diff) / abs(diff))
    return worst


@prop("h2-error-lower-bound", "||S - S_r||^2 <= ||S||^2 - ||S_r||^2 (excess)", 1e-10)
def _h2_bound(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, sys in enumerate(_sym_instances(seed, 3), start=1):
        t = reduced_h2_error_terms(sys, orth(rng.standard_normal((sys.n, k))))
        worst = max(worst, t.h2_error_system_sq - (t.h2_full_sq - t.h2_reduced_sq))
    return worst


@prop("h2-bound-tight-at-birka", "the H2 bound is an equality at converged BIRKA subspaces (gap / ||S||^2)", 1e-6)
def _h2_tight(seed):
    worst = 0.0
    for k, sys in enumerate(_sym_instances(seed, 2), start=1):
        sys = sys.with_B(sys.B, sys.B.T)
        res = birka(sys, cfg=BirkaConfig(k=k, tol=1e-12, max_iters=300, seed=seed))
        if not res.converged:
            return np.inf
        t = reduced_h2_error_terms(sys, res.V)
        worst = max(worst, abs(t.gap) / t.h2_full_sq)
    return worst


@prop("reduced-operator-spd", "projected energy operator is symmetric positive definite (-min eig)", 0.0)
def _reduced_spd(seed):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for k, sys in enumerate(_sym_instances(seed, 2, n=10), start=1):
        M = reduced_operator_matrix(sys, orth(rng.standard_normal((sys.n, k + 1))))
        worst = max(worst, -float(np.linalg.eigvalsh(core.symmetrize(M))[0]))
    return worst


# ---------------------------------------------------------------- fixed point


@prop("fixed-point-modes-agree", "splitting and residual-form iterates coincide (relative)", 1e-11)
def _fp_modes(seed):
    worst = 0.0
    for sys in _sym_instances(seed, 2):
        kw = dict(max_iters=25, stop_tol=1e-14)
        a = fixed_point_solve(sys, FixedPointConfig(mode="splitting", **kw), keep_iterates=True).iterates
        b = fixed_point_solve(sys, FixedPointConfig(mode="residual", **kw), keep_iterates=True).iterates
        for Xa, Xb in zip(a[1:], b[1:]):
            worst = max(worst, float(np.linalg.norm(Xa - Xb) / np.linalg.norm(Xa)))
    return worst


@prop("fixed-point-psd-chain", "fixed-point residuals PSD and iterates increasing towards X", 0.0)
def _fp_chain(seed):
    worst = 0.0
    for sys in _sym_instances(seed, 2) + [heat2d(5)]:
        X = core.direct_solve(sys)
        nX = np.linalg.norm(X)
        res = fixed_point_solve(sys, FixedPointConfig(stop_tol=1e-10), keep_iterates=True)
        for k, Xk in enumerate(res.iterates):
            Rk = core.residual(sys, Xk)
            worst = max(worst, _psd_violation(Rk, core.residual_psd_slack(sys, Xk, Rk)))
            worst = max(worst, _psd_violation(X - Xk, core.psd_slack(X - Xk, nX)))
            if k:
                D = Xk - res.iterates[k - 1]
                worst = max(worst, _psd_violation(D, core.psd_slack(D, nX)))
    return worst


@prop("fixed-point-rate", "observed error contraction minus rho(L^-1 Pi) stays below 0.05", 0.05)
def _fp_rate(seed):
    worst = -np.inf
    for sys in _sym_instances(seed, 2):
        X = core.direct_solve(sys)
        res = fixed_point_solve(sys, FixedPointConfig(stop_tol=1e-12, max_iters=300), X_ref=X)
        errs = res.report.rel_errors
        tail = errs[len(errs) // 2:]
        rate = float(np.exp(np.mean(np.diff(np.log(tail)))))
        worst = max(worst, rate - core.check_contraction(sys))
    return worst


# ---------------------------------------------------------------- rational Krylov


def _linear_instances(seed, count=2):
    out = []
    for i, s in enumerate(_seeds(seed, count)):
        sys = random_system(20 + 5 * i, m=0, r=1, seed=s, symmetric=False)
        shifts = list(np.random.default_rng(s).uniform(0.5, 15.0, 5))
        out.append((sys, shifts))
    return out


@prop("span-containment-linear", "range((A - sI)^-1 R_k) lies in the next rational Krylov space (m = 0)", 1e-9)
def _span(seed):
    worst = 0.0
    for sys, shifts in _linear_instances(seed):
        rep = check_residual_span(sys.A, sys.B[:, 0], shifts)
        worst = max(worst, rep.max_containment, max(s.residual_space_angle for s in rep.steps))
    return worst


@prop("span-residual-factorization", "R = (A - sI) V (V^T A V - sI)^-1 V^T R on the next space (m = 0)", 1e-9)
def _factorization(seed):
    return max(check_residual_span(sys.A, sys.B[:, 0], sh).max_factorization_defect for sys, sh in _linear_instances(seed))


@prop("span-range-forces-zero-residual", "a residual whose range lies in V_k vanishes (m = 0)", 1e-9)
def _range_zero(seed):
    worst = 0.0
    for sys, shifts in _linear_instances(seed):
        for step in check_residual_span(sys.A, sys.B[:, 0], shifts).steps:
            if step.containment_current <= 1e-9:
                worst = max(worst, step.residual_rel)
    A, b = invariant_subspace_instance(20, 3, seed=seed % 1000)
    steps = check_residual_span(A, b, [1.0, 2.0, 3.0, 4.0]).steps
    return max(worst, max(s.residual_rel for s in steps[2:]))


@prop("variant-e-is-classical-rk", "variant E on m = 0 spans the classical rational Krylov space", 1e-9)
def _variant_e(seed):
    worst = 0.0
    for sys, _ in _linear_instances(seed):
        res = rk_solve(sys, variant("E"), stop_tol=1e-12, max_dim=8)
        ref = rational_krylov_basis(sys.A, sys.B, [s for s in res.shifts if s.imag >= 0], continuation=False)
        worst = max(worst, max_angle(res.basis.V, ref) if ref.shape == res.basis.V.shape else np.inf)
    return worst


@prop("rk-basis-orthonormal", "every variant keeps ||V^T V - I|| <= 1e-9 and Galerkin orthogonality", 1e-9)
def _rk_basis(seed):
    sys = random_system(16, m=1, r=1, seed=seed, contraction=0.5)
    worst = 0.0
    for label in "ABCDE":
        res = rk_solve(sys, variant(label), stop_tol=1e-10, max_dim=12)
        V = res.basis.V
        R = core.residual(sys, res.solution.approximation())
        worst = max(worst, float(np.linalg.norm(V.T @ V - np.eye(V.shape[1]))),
                    float(np.linalg.norm(V.T @ R @ V) / np.linalg.norm(sys.BBt)))
    return worst


# ---------------------------------------------------------------- benchmarks


@prop("heat-negative-definite", "heat2d A = A^T with max eigenvalue < 0 (reports max eigenvalue)", 0.0)
def _heat(seed):
    worst = -np.inf
    for nx in (4, 6):
        A = core.todense(heat2d(nx).A)
        if not np.array_equal(A, A.T):
            return np.inf
        worst = max(worst, float(np.linalg.eigvalsh(A).max()))
    return worst


@prop("fokker-planck-simple-zero", "raw Fokker-Planck operator has exactly one |eigenvalue| <= 1e-8", 0.0)
def _fp_zero(seed):
    A, _ = fokker_planck_raw(40)
    lam = np.linalg.eigvals(core.todense(A))
    return float(abs(int(np.sum(np.abs(lam) <= 1e-8)) - 1))


@prop("benchmark-contraction", "rho(L^-1 Pi) < 1 on small benchmark and random instances (reports max)", 1.0 - 1e-12)
def _contraction(seed):
    from .benchmarks import burgers_carleman, fokker_planck_1d

    systems = [heat2d(5), fokker_planck_1d(20), burgers_carleman(5)] + _sym_instances(seed, 1)
    return max(core.check_contraction(s) for s in systems)


# ---------------------------------------------------------------- runner


def run_property(key, seed):
    description, threshold, fn = PROPERTIES[key]
    t0 = time.perf_counter()
    try:
        worst = float(fn(seed))
        error = ""
    except Exception as exc:  # a crash is a failure of that property, not of the suite
        worst, error = float("inf"), f"{type(exc).__name__}: {exc}"
    passed = bool(np.isfinite(worst) and worst <= threshold) and not error
    return PropertyResult(key, description, passed, worst, threshold, time.perf_counter() - t0, error)


def run_suite(seed=0, keys=None):
    return [run_property(k, seed) for k in (keys or PROPERTIES)]


def format_table(results, timing=True):
    width = max(len(r.key) for r in results)
    lines = [f"{'property':<{width}}  status  {'worst':>10}  {'threshold':>10}" + ("  seconds" if timing else "")]
    for r in results:
        line = f"{r.key:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.worst:>10.3g}  {r.threshold:>10.3g}"
        if timing:
            line += f"  {r.seconds:7.2f}"
        if r.error:
            line += f"  [{r.error}]"
        lines.append(line)
    return "\n".join(lines)
