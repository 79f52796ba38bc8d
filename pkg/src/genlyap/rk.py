"""Residual-driven rational Krylov Galerkin solver, its shift rules and variants A-F."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.sparse.linalg import eigs
from scipy.spatial import ConvexHull, QhullError

from .core import (
    BilinearSystem,
    IllPosedError,
    LowRankFactorization,
    dominant_left_singular_vectors,
    residual,
    shifted_solve,
    symmetrize,
    todense,
)
from .galerkin import (
    DENSE_RESIDUAL_MAX,
    SubspaceBasis,
    containment,
    extend_orthonormal,
    factored_residual,
    galerkin_solve,
    max_angle,
    orth,
)
from .report import IterRecord, SolveReport, Stopwatch, relative_error

# spectra of larger matrices are bracketed with ARPACK instead of a dense eig
DENSE_SPECTRUM_MAX = 2000


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True)
class GreedyResidual:
    """Maximize the residual of the projected shifted solve over a real grid."""

    lower_factor: float = 0.99
    upper_factor: float = 1.01
    grid: int = 200

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid resolution must be at least 2")


@dataclass(frozen=True)
class RitzRational:
    """Maximize 1/|r(z)| on the boundary of the mirrored Ritz hull."""

    boundary_samples: int = 500

    def __post_init__(self):
        if self.boundary_samples < 1:
            raise ValueError("boundary_samples must be positive")


@dataclass(frozen=True)
class Prescribed:
    """Use a fixed list of shifts in order, cycling when exhausted."""

    shifts: tuple

    def __post_init__(self):
        if len(self.shifts) == 0:
            raise ValueError("prescribed shift list is empty")


@dataclass(frozen=True)
class ShiftStrategy:
    """Shift rule plus direction choice.

    ``rule`` is a :class:`GreedyResidual`, :class:`RitzRational` or
    :class:`Prescribed` instance. ``direction`` is ``"residual"`` (dominant
    left singular vectors of the Galerkin residual) or ``"rhs"`` (always
    B). ``tangential`` replaces the direction by the dominant left singular
    vectors of the deflated residual at the chosen shift.
    """

    rule: object
    direction: str = "residual"
    tangential: bool = False
    directions_per_step: int = 1
    label: str = ""

    def __post_init__(self):
        if self.direction not in ("residual", "rhs"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.directions_per_step < 1:
            raise ValueError("directions_per_step must be positive")
        if self.tangential and self.direction == "rhs":
            raise ValueError("tangential directions need the residual")


def birka_shifts(sys, k=10, tol=1e-3, max_iters=100, seed=0):
    """Mirrored eigenvalues of a k-dimensional BIRKA reduced A.

    One representative (non-negative imaginary part) per conjugate pair,
    sorted ascending by real part; real parts are made positive.
    """
    from .birka import BirkaConfig, birka

    res = birka(sys, cfg=BirkaConfig(k=min(k, sys.n), tol=tol, max_iters=max_iters, seed=seed))
    lam = np.asarray(res.eigenvalues, dtype=complex)
    mirrored = np.abs(lam.real) + 1j * lam.imag
    reps = [z for z in mirrored if z.imag >= -1e-12 * abs(z)]
    reps = [complex(z.real, 0.0) if abs(z.imag) <= 1e-10 * abs(z) else complex(z) for z in reps]
    reps.sort(key=lambda z: (z.real, z.imag))
    return tuple(reps), res


def variant(label, shifts=None):
    """Strategy for one of the six labelled method variants.

    A: greedy shift, residual direction. B: greedy shift, tangential
    directions. C: Ritz shift, residual direction. D: Ritz shift,
    tangential directions. E: greedy shift with B as both the direction and
    the vector in the shift objective. F: prescribed shifts (see
    :func:`birka_shifts`), residual direction.
    """
    label = label.upper()
    if label == "A":
        return ShiftStrategy(GreedyResidual(), label="A")
    if label == "B":
        return ShiftStrategy(GreedyResidual(), tangential=True, label="B")
    if label == "C":
        return ShiftStrategy(RitzRational(), label="C")
    if label == "D":
        return ShiftStrategy(RitzRational(), tangential=True, label="D")
    if label == "E":
        return ShiftStrategy(GreedyResidual(), direction="rhs", label="E")
    if label == "F":
        if shifts is None:
            raise ValueError("variant F needs prescribed shifts (see birka_shifts)")
        shifts = tuple(sorted((complex(s) for s in shifts), key=lambda z: (z.real, z.imag)))
        return ShiftStrategy(Prescribed(shifts), label="F")
    raise ValueError(f"unknown variant {label!r}; choose from A-F")


# ---------------------------------------------------------------- shift rules


def spectral_interval(A, lower_factor=0.99, upper_factor=1.01):
    """[lower_factor * (-max Re lambda), upper_factor * (-min Re lambda)] for stable A."""
    n = A.shape[0]
    if n <= DENSE_SPECTRUM_MAX:
        re = np.linalg.eigvals(todense(A)).real
        hi, lo = re.max(), re.min()
    else:
        hi = eigs(A, k=1, which="LR", return_eigenvectors=False, maxiter=5000, tol=1e-6).real[0]
        lo = eigs(A, k=1, which="SR", return_eigenvectors=False, maxiter=5000, tol=1e-6).real[0]
    if hi >= 0:
        raise IllPosedError("A is not stable; the mirrored spectral interval is undefined")
    return lower_factor * (-hi), upper_factor * (-lo)


def _greedy_objective(AV, V, A_k, r, sigmas):
    """||r - (A - s I) V (A_k - s I)^{-1} V^T r|| for each s (nan where singular)."""
    r = r.reshape(r.shape[0], -1)
    out = np.full(len(sigmas), np.nan)
    if V.shape[1] == 0:
        out[:] = np.linalg.norm(r)
        return out
    Vr = V.T @ r
    I_k = np.eye(A_k.shape[0])
    for i, s in enumerate(sigmas):
        try:
            y = np.linalg.solve(A_k - s * I_k, Vr)
        except np.linalg.LinAlgError:
            continue
        out[i] = np.linalg.norm(r - (AV @ y - s * (V @ y)))
    return out


@dataclass(frozen=True)
class ShiftChoice:
    sigma: complex
    degenerate: bool = False


def shift_greedy(sys, basis, r, interval=None, grid=200, zero_tol=1e-12):
    """Grid maximizer of ||r - (A - s I) V (A_k - s I)^{-1} V^T r|| on a real interval.

    The first maximum wins ties, so a constant objective returns the left
    end of the interval. A numerically zero objective, or one that is
    singular at every grid point, gives the left end with
    ``degenerate=True``.
    """
    if interval is None:
        interval = spectral_interval(sys.A)
    lo, hi = interval
    sigmas = np.linspace(lo, hi, grid)
    V = basis.V if isinstance(basis, SubspaceBasis) else np.asarray(basis)
    AV = np.asarray(sys.A @ V)
    A_k = V.T @ AV
    vals = _greedy_objective(AV, V, A_k, np.asarray(r, dtype=float), sigmas)
    if np.all(np.isnan(vals)):
        return ShiftChoice(complex(lo), True)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    if vals[i] <= zero_tol * max(np.linalg.norm(r), np.finfo(float).tiny):
        return ShiftChoice(complex(lo), True)
    return ShiftChoice(complex(sigmas[i]), False)


def _hull_boundary(points, samples):
    """Points spread along the boundary of the convex hull of complex ``points``."""
    pts = np.unique(np.round(np.asarray(points, dtype=complex), 14))
    if pts.size == 1:
        return pts
    xy = np.column_stack([pts.real, pts.imag])
    try:
        hull = ConvexHull(xy)
        poly = pts[hull.vertices]
        loop = np.append(poly, poly[0])
    except (QhullError, ValueError):
        # collinear: the hull is the segment between the two farthest points
        d = np.abs(pts[:, None] - pts[None, :])
        i, j = np.unravel_index(np.argmax(d), d.shape)
        loop = np.array([pts[i], pts[j]])
    seg = np.abs(np.diff(loop))
    total = seg.sum()
    if total == 0.0:
        return loop[:1]
    t = np.linspace(0.0, total, samples, endpoint=loop.size == 2)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, seg.size - 1)
    frac = (t - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    return loop[idx] + frac * (loop[idx + 1] - loop[idx])


def mirror(values):
    """-conj(lambda) with the real part forced non-negative."""
    values = np.asarray(values, dtype=complex)
    return np.abs(values.real) + 1j * values.imag


def shift_ritz(ritz_values, used_shifts=(), samples=500, imag_tol=1e-10):
    """Maximize 1/|r(z)| over the boundary of the hull of the mirrored Ritz values.

    r(z) has zeros at the Ritz values and poles at ``used_shifts``; it is
    evaluated in log form. A shift whose imaginary part is at most
    ``imag_tol`` times its modulus is returned as real.
    """
    ritz = np.asarray(ritz_values, dtype=complex).ravel()
    if ritz.size == 0:
        raise ValueError("shift_ritz needs at least one Ritz value")
    z = _hull_boundary(mirror(ritz), samples)
    if z.size == 0:
        raise ValueError("empty boundary sample set")
    used = np.asarray(used_shifts, dtype=complex).ravel()
    with np.errstate(divide="ignore"):
        logval = -np.sum(np.log(np.abs(z[:, None] - ritz[None, :])), axis=1)
        if used.size:
            logval += np.sum(np.log(np.abs(z[:, None] - used[None, :])), axis=1)
    s = complex(z[int(np.argmax(logval))])
    if abs(s.imag) <= imag_tol * abs(s):
        s = complex(s.real, 0.0)
    return s


# ---------------------------------------------------------------- directions and expansion


def _deflated_residual_factor(sys, V, R, sigma):
    """(L, Q) with R - (A - s I) V (A_k - s I)^{-1} V^T R == L Q^T and Q orthonormal."""
    if isinstance(R, LowRankFactorization):
        Qz, T = np.linalg.qr(R.Z)
        left, right_core = R.Z, R.D @ T.T
    else:
        R = np.asarray(R)
        left, right_core, Qz = R, np.eye(R.shape[1]), np.eye(R.shape[1])
    if V.shape[1]:
        A_k = V.T @ np.asarray(sys.A @ V)
        y = np.linalg.solve(A_k - sigma * np.eye(A_k.shape[0]), V.T @ left)
        left = left - (np.asarray(sys.A @ (V @ y)) - sigma * (V @ y))
    return left @ right_core, Qz


def tangential_directions(sys, basis, R, sigma, count=1):
    """Leading left singular vectors of R - (A - s I) V (A_k - s I)^{-1} V^T R.

    For complex ``sigma`` the real and imaginary parts are stacked side by
    side so the returned directions are real.
    """
    V = basis.V if isinstance(basis, SubspaceBasis) else np.asarray(basis)
    M, _ = _deflated_residual_factor(sys, V, R, sigma)
    if np.iscomplexobj(M):
        M = np.column_stack([M.real, M.imag])
    return dominant_left_singular_vectors(M, count)


def shifted_images(sys, directions, sigma):
    """Real columns spanning (A - s I)^{-1} d and, for complex s, its conjugate."""
    D = np.asarray(directions, dtype=float)
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    sigma = complex(sigma)
    if sigma.imag == 0.0:
        return np.asarray(shifted_solve(sys.A, -sigma.real, D)).real
    Z = shifted_solve(sys.A, -sigma, D.astype(complex))
    return np.column_stack([Z.real, Z.imag])


def expand_with_shift(sys, basis, directions, sigma):
    """Append (A - s I)^{-1} d to the basis (Re and Im parts for complex s).

    Returns ``(basis, kept)``.
    """
    return extend_orthonormal(basis, shifted_images(sys, directions, sigma))


# ---------------------------------------------------------------- solver


@dataclass(eq=False)
class RkResult:
    report: SolveReport
    solution: object
    shifts: list = field(default_factory=list)

    @property
    def basis(self):
        return self.solution.basis


def _residual_parts(sys, sol, dense):
    if dense:
        R = residual(sys, sol.approximation())
        if sys.symmetric:
            R = symmetrize(R)
        return R, float(np.linalg.norm(R))
    F = factored_residual(sys, sol)
    return F, F.fro_norm()


def rk_solve(sys, strategy, stop_tol=1e-8, max_dim=50, X_ref=None, dense_residual=None, interval=None):
    """Galerkin solver on the residual-driven rational Krylov space.

    Starts from orth(B); each step solves the projected equation, forms
    the residual, stops if its relative Frobenius norm (over ||B B^T||_F)
    is at most ``stop_tol``, and otherwise expands the basis with shifted
    solves of the chosen directions. Status is ``converged``, ``max_dim``
    or ``stagnation`` (no column survived orthogonalization).
    """
    n = sys.n
    label = strategy.label or "custom"
    report = SolveReport(f"RK-{label}", info={"variant": label, "tangential": strategy.tangential})
    clock = Stopwatch()
    nb = float(np.linalg.norm(sys.B.T @ sys.B))
    dense = n <= DENSE_RESIDUAL_MAX if dense_residual is None else dense_residual
    rule = strategy.rule
    if isinstance(rule, GreedyResidual) and interval is None:
        interval = spectral_interval(sys.A, rule.lower_factor, rule.upper_factor)
    if interval is not None:
        report.info["interval_lo"], report.info["interval_hi"] = map(float, interval)
    basis, kept = extend_orthonormal(SubspaceBasis.empty(n), sys.B)
    used = []
    result = RkResult(report, None, used)
    sigma = complex("nan")
    p = strategy.directions_per_step
    while True:
        sol = galerkin_solve(sys, basis)
        result.solution = sol
        R, nr = _residual_parts(sys, sol, dense)
        rel = nr / nb if nb > 0 else 0.0
        err = relative_error(X_ref, sol.approximation()) if X_ref is not None else float("nan")
        report.add(IterRecord(basis.k, rel, err, sigma, kept, clock.millis()))
        if rel <= stop_tol:
            report.status = "converged"
            break
        if basis.k >= max_dim:
            report.status = "max_dim"
            break
        if strategy.direction == "rhs":
            r = sys.B
        else:
            try:
                r = dominant_left_singular_vectors(R, p)
            except ValueError:
                report.status = "stagnation"
                break
        if isinstance(rule, GreedyResidual):
            choice = shift_greedy(sys, basis, r, interval, rule.grid)
            sigma = choice.sigma
            if choice.degenerate:
                report.info["degenerate_shift_at_dim"] = basis.k
        elif isinstance(rule, RitzRational):
            A_k = basis.V.T @ np.asarray(sys.A @ basis.V)
            sigma = shift_ritz(np.linalg.eigvals(A_k), used, rule.boundary_samples)
        else:
            sigma = complex(rule.shifts[_prescribed_index(used, rule)])
        if strategy.tangential:
            try:
                directions = tangential_directions(sys, basis, R, sigma, p)
            except ValueError:
                report.status = "stagnation"
                break
        else:
            directions = r
        try:
            basis, kept = expand_with_shift(sys, basis, directions, sigma)
        except IllPosedError:
            report.status = "failed"
            report.info["error"] = f"singular shift {sigma}"
            break
        used.append(sigma)
        if sigma.imag != 0.0:
            used.append(sigma.conjugate())
        if kept == 0:
            report.status = "stagnation"
            report.info["stagnation_dim"] = basis.k
            break
    report.info["shifts_used"] = len(result.shifts)
    return result


def _prescribed_index(used, rule):
    # complex shifts occupy two entries of ``used`` (the pair)
    distinct = sum(1 for s in used if s.imag >= 0)
    return distinct % len(rule.shifts)


# ---------------------------------------------------------------- linear-case harness


def _lyap_galerkin_residual(A, b, V):
    """Galerkin residual of A X + X A^T + b b^T = 0 on span(V)."""
    sys = BilinearSystem(A, (), b)
    sol = galerkin_solve(sys, SubspaceBasis(V))
    return residual(sys, sol.approximation())


def rational_krylov_basis(A, b, shifts, N_list=(), continuation=True):
    """Orthonormal basis of span{b, (A - s_1 I)^{-1} b, ..., (A - s_k I)^{-1} b}.

    With ``continuation`` (the default) each shift is applied to the newest
    basis block rather than to b (rational Arnoldi). For distinct shifts
    this spans the same space and avoids orthogonalizing nearly dependent
    columns. Without it the columns (A - s_j I)^{-1} b are appended one at
    a time, which reproduces solvers that always expand with b. Repeated
    shifts add nothing to the span and are skipped in both modes.
    """
    b = np.asarray(b, dtype=float).reshape(A.shape[0], -1)
    sys = BilinearSystem(A, N_list, b)
    basis, kept = extend_orthonormal(SubspaceBasis.empty(A.shape[0]), b)
    cont = basis.V[:, -kept:] if kept else basis.V
    seen = set()
    for s in shifts:
        s = complex(s)
        if s in seen or s.conjugate() in seen:
            continue
        seen.add(s)
        if cont.shape[1] == 0:
            break
        basis, kept = extend_orthonormal(basis, shifted_images(sys, cont if continuation else b, s))
        if kept:
            cont = basis.V[:, -kept:]
    return basis.V


@dataclass
class SpanStep:
    k: int
    containment_next: float
    containment_current: float
    residual_rel: float
    factorization_defect: float
    residual_space_angle: float


@dataclass
class SpanReport:
    steps: list

    @property
    def max_containment(self):
        return max(s.containment_next for s in self.steps)

    @property
    def max_factorization_defect(self):
        return max(s.factorization_defect for s in self.steps)


def _range_basis(M, rtol=1e-10):
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > rtol * s[0]]


def check_residual_span(A, b, shifts, N_list=()):
    """Check the residual/rational-Krylov span relations step by step.

    For k = 0 .. len(shifts) - 1 with V_k spanning {b, (A - s_1)^{-1} b, ...,
    (A - s_k)^{-1} b} and R_k the Galerkin residual of A X + X A^T + sum N X N^T
    + b b^T = 0 on V_k, records

    * ``containment_next``: ||(I - V_{k+1} V_{k+1}^T) M||_2 / ||M||_2 for
      M = (A - s_{k+1} I)^{-1} R_k;
    * ``containment_current``: the same measured against V_k;
    * ``residual_rel``: ||R_k||_F / ||b b^T||_F;
    * ``factorization_defect``: relative defect of R_k = (A - s I) V (V^T A V - s I)^{-1}
      V^T R_k with V = V_{k+1} and s = s_{k+1};
    * ``residual_space_angle``: largest principal angle between V_{k+1} and
      the span of b and the ranges of (A - s_j I)^{-1} R_{j-1}, j <= k+1.

    A residual below 1e-12 ||b b^T|| counts as zero: its range is empty, so
    both containment measures and the factorization defect are reported as 0.
    With no N matrices the first and the last are zero up to rounding;
    passing N matrices gives a negative control.
    """
    A = todense(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, -1)
    nb = np.linalg.norm(b @ b.T)
    sys = BilinearSystem(A, tuple(N_list), b)
    I = np.eye(n)
    hat_cols = [b]
    steps = []
    V = orth(b)
    for k, s in enumerate(shifts):
        V_next = rational_krylov_basis(A, b, shifts[: k + 1])
        sol = galerkin_solve(sys, SubspaceBasis(V))
        R = residual(sys, sol.approximation())
        nR = np.linalg.norm(R)
        # a residual at rounding level has an empty range
        live = nR > 1e-12 * nb
        M = np.linalg.solve(A - s * I, R)
        if live:
            hat_cols.append(_range_basis(M))
        hat = orth(np.column_stack(hat_cols))
        A_k = V_next.T @ A @ V_next
        rebuilt = (A - s * I) @ V_next @ np.linalg.solve(A_k - s * np.eye(A_k.shape[0]), V_next.T @ R)
        steps.append(SpanStep(
            k=k,
            containment_next=containment(M, V_next) if live else 0.0,
            containment_current=containment(M, V) if live else 0.0,
            residual_rel=float(nR / nb),
            factorization_defect=float(np.linalg.norm(R - rebuilt) / nR) if live else 0.0,
            residual_space_angle=max_angle(V_next, hat) if hat.shape[1] == V_next.shape[1] else float("inf"),
        ))
        V = V_next
    return SpanReport(steps)


def invariant_subspace_instance(n, d, seed=0, spread=(1.0, 10.0)):
    """Stable A and b with b inside a d-dimensional invariant subspace of A."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    T = np.diag(-rng.uniform(*spread, size=n)) + np.triu(rng.standard_normal((n, n)), 1) * 0.3
    T[d:, :d] = 0.0
    A = Q @ T @ Q.T
    b = Q[:, :d] @ rng.standard_normal(d)
    return A, b
