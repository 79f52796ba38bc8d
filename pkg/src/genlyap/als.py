"""Rank-1 alternating linear scheme and the greedy solvers built on it."""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .core import (
    LowRankFactorization,
    dominant_left_singular_vectors,
    residual,
    shifted_solve,
    symmetrize,
)
from .galerkin import (
    DENSE_RESIDUAL_MAX,
    GalerkinSolution,
    SubspaceBasis,
    extend_orthonormal,
    factored_residual,
    galerkin_solve,
)
from .report import IterRecord, SolveReport, Stopwatch, relative_error


@dataclass(frozen=True)
class AlsConfig:
    """Settings for the rank-1 inner loop and the outer greedy loop.

    Attributes
    ----------
    tol
        Stop the inner loop once the averaged Rayleigh quotient changes by
        at most this much between sweeps.
    max_inner_iters
        Sweep limit of the inner loop.
    max_outer_ranks
        Largest rank (rank-1 mode) or basis dimension (subspace mode).
    symmetric
        Use the one-vector update v = w. This is what the greedy solver
        uses on every system, symmetric or not.
    mode
        ``"subspace"`` extends an orthonormal basis with each new vector
        and re-solves the projected equation; ``"rank1"`` adds v w^T to
        the running approximation.
    stop_tol
        Relative residual at which the outer loop stops.
    init
        ``"residual"`` starts each inner loop from the dominant left
        singular vector of the current residual, ``"random"`` from a
        seeded Gaussian vector.
    """

    tol: float = 1e-2
    max_inner_iters: int = 20
    max_outer_ranks: int = 50
    symmetric: bool = True
    mode: str = "subspace"
    stop_tol: float = 1e-8
    init: str = "residual"
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_inner_iters < 1 or self.max_outer_ranks < 0:
            raise ValueError("iteration limits must be positive")
        if self.mode not in ("subspace", "rank1"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.init not in ("residual", "random"):
            raise ValueError(f"unknown init {self.init!r}")


DEFAULT_ALS = AlsConfig()


@dataclass(frozen=True, eq=False)
class Rank1Result:
    """Output of :func:`als_rank1`.

    ``quotients`` holds the stopping quantity before the first sweep and
    after each sweep; ``vw_gaps`` holds ||v/|v| - w/|w||| after each sweep
    (all zero in symmetric mode).
    """

    v: np.ndarray
    w: np.ndarray
    iterations: int
    converged: bool
    degenerate: bool = False
    quotients: tuple = ()
    vw_gaps: tuple = ()


def _matvec(R, x, transpose=False):
    if isinstance(R, LowRankFactorization):
        return R.matvec(x)
    if isinstance(R, LinearOperator):
        return R.rmatvec(x) if transpose else R.matvec(x)
    R = np.asarray(R)
    return R.T @ x if transpose else R @ x


def _rayleigh(A, x):
    return float(x @ np.asarray(A @ x).ravel() / (x @ x))


def _shifted_matrix_solve(sys, u, rhs):
    """Solve (A + (u^T A u) I + sum_i (u^T N_i u) N_i) x = rhs for unit u."""
    q = float(u @ np.asarray(sys.A @ u).ravel())
    coeffs = [float(u @ np.asarray(N @ u).ravel()) for N in sys.N_list]
    return shifted_solve(sys.A, q, rhs, sys.N_list, coeffs)


def als_objective(sys, R, v, w):
    """J(v, w) = <v w^T, v w^T>_M - 2 v^T R w, evaluated in closed form."""
    v = np.asarray(v, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    vv, ww = v @ v, w @ w
    if vv == 0.0 or ww == 0.0:
        return 0.0
    A = sys.A
    quad = -(v @ np.asarray(A @ v).ravel()) * ww - vv * (w @ np.asarray(A @ w).ravel())
    for N in sys.N_list:
        quad -= (v @ np.asarray(N @ v).ravel()) * (w @ np.asarray(N @ w).ravel())
    return float(quad - 2.0 * v @ _matvec(R, w))


def als_rank1(sys, R, v0, w0=None, cfg=DEFAULT_ALS):
    """Locally optimal rank-1 correction v w^T for the residual R.

    In the two-vector form each sweep normalizes w, solves the shifted
    system for v, normalizes v and solves for w; the pair is finally
    rescaled so that ||v|| = ||w|| without changing v w^T. With
    ``cfg.symmetric`` only one vector is iterated and the result has
    v = w. A zero residual direction ends the loop with ``degenerate=True``
    and zero vectors.
    """
    n = sys.n
    v = np.asarray(v0, dtype=float).ravel().copy()
    if v.shape != (n,):
        raise ValueError(f"v0 must have length {n}")
    if not np.linalg.norm(v) > 0:
        raise ValueError("v0 must be nonzero")
    if cfg.symmetric:
        return _rank1_symmetric(sys, R, v, cfg)
    w = v.copy() if w0 is None else np.asarray(w0, dtype=float).ravel().copy()
    if not np.linalg.norm(w) > 0:
        raise ValueError("w0 must be nonzero")
    zero = Rank1Result(np.zeros(n), np.zeros(n), 0, False, True)
    q_prev = 0.5 * (_rayleigh(sys.A, v) + _rayleigh(sys.A.T, w))
    quotients, gaps = [q_prev], []
    converged = False
    it = 0
    for it in range(1, cfg.max_inner_iters + 1):
        w = w / np.linalg.norm(w)
        v = _shifted_matrix_solve(sys, w, -_matvec(R, w))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return Rank1Result(zero.v, zero.w, it, False, True, tuple(quotients), tuple(gaps))
        v = v / nv
        w = _shifted_matrix_solve(sys, v, -_matvec(R, v, transpose=True))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return Rank1Result(zero.v, zero.w, it, False, True, tuple(quotients), tuple(gaps))
        q = 0.5 * (_rayleigh(sys.A, v) + _rayleigh(sys.A.T, w))
        quotients.append(q)
        gaps.append(float(np.linalg.norm(v - w / nw)))
        if abs(q - q_prev) <= cfg.tol:
            converged = True
            break
        q_prev = q
    s = np.sqrt(np.linalg.norm(w) / np.linalg.norm(v))
    return Rank1Result(v * s, w / s, it, converged, False, tuple(quotients), tuple(gaps))


def _rank1_symmetric(sys, R, v, cfg):
    n = sys.n
    q_prev = _rayleigh(sys.A, v)
    quotients = [q_prev]
    converged = False
    x = v
    it = 0
    for it in range(1, cfg.max_inner_iters + 1):
        u = x / np.linalg.norm(x)
        x = _shifted_matrix_solve(sys, u, -_matvec(R, u, transpose=True))
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return Rank1Result(np.zeros(n), np.zeros(n), it, False, True, tuple(quotients), (0.0,) * (it - 1))
        q = _rayleigh(sys.A, x)
        quotients.append(q)
        if abs(q - q_prev) <= cfg.tol:
            converged = True
            break
        q_prev = q
    out = x / np.sqrt(np.linalg.norm(x))
    return Rank1Result(out, out.copy(), it, converged, False, tuple(quotients), (0.0,) * it)


def stationarity_residual(sys, R, v):
    """Relative defect of -A v|v|^2 - v (v^T A v) - sum N_i v (v^T N_i v) = R v."""
    v = np.asarray(v, dtype=float).ravel()
    Av = np.asarray(sys.A @ v).ravel()
    lhs = -Av * (v @ v) - v * (v @ Av)
    for N in sys.N_list:
        Nv = np.asarray(N @ v).ravel()
        lhs -= Nv * (v @ Nv)
    Rv = _matvec(R, v)
    scale = max(np.linalg.norm(Rv), np.linalg.norm(lhs), np.finfo(float).tiny)
    return float(np.linalg.norm(lhs - Rv) / scale)


def scalar_identity_defect(sys, R, v):
    """Relative defect of 2 (v^T A v)|v|^2 + v^T R v + sum (v^T N_i v)^2 = 0."""
    v = np.asarray(v, dtype=float).ravel()
    vAv = float(v @ np.asarray(sys.A @ v).ravel())
    terms = [2.0 * vAv * (v @ v), float(v @ _matvec(R, v))]
    terms += [float(v @ np.asarray(N @ v).ravel()) ** 2 for N in sys.N_list]
    scale = max(sum(abs(t) for t in terms), np.finfo(float).tiny)
    return abs(sum(terms)) / scale


@dataclass(eq=False)
class AlsResult:
    report: SolveReport
    factorization: LowRankFactorization
    solution: GalerkinSolution = None
    inner: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    left: np.ndarray = None
    right: np.ndarray = None

    def approximation(self):
        if self.solution is not None:
            return self.solution.approximation()
        return self.left @ self.right.T


def _rank1_state_residual(sys, U, W, dense):
    """Residual of U W^T (U is W in the symmetric case)."""
    if dense:
        return residual(sys, U @ W.T)
    if W is not U:
        raise ValueError("factored residuals need the symmetric update")
    sol = GalerkinSolution(np.eye(U.shape[1]), SubspaceBasis(U))
    return factored_residual(sys, sol)


def _fro(R):
    return R.fro_norm() if isinstance(R, LowRankFactorization) else float(np.linalg.norm(R))


def _start_vector(R, cfg, rng, n):
    if cfg.init == "random":
        return rng.standard_normal(n)
    try:
        return dominant_left_singular_vectors(R, 1)[:, 0]
    except ValueError:
        return None


def als_greedy(sys, cfg=DEFAULT_ALS, X_ref=None, keep_iterates=False):
    """Greedy low-rank solver driven by :func:`als_rank1`.

    Rank-1 mode accumulates X_{k+1} = X_k + v w^T starting from zero.
    Subspace mode adds each v to an orthonormal basis and replaces the
    approximation by the Galerkin solution on that basis. The report has
    one record per approximation, including the zero start (dim 0).

    With ``keep_iterates`` the dense approximations and residuals are kept
    in ``result.iterates`` and ``result.residuals`` (small n only).
    """
    n = sys.n
    method = "ALS" if cfg.mode == "subspace" else "ALS-rank1"
    report = SolveReport(method, info={"tol": cfg.tol, "mode": cfg.mode})
    clock = Stopwatch()
    rng = np.random.default_rng(cfg.seed)
    dense = n <= DENSE_RESIDUAL_MAX or keep_iterates
    nb = float(np.linalg.norm(sys.B.T @ sys.B))
    U = np.zeros((n, 0))
    W = U
    basis = SubspaceBasis.empty(n)
    sol = GalerkinSolution(np.zeros((0, 0)), basis)
    result = AlsResult(report, LowRankFactorization(U, np.zeros((0, 0))), sol if cfg.mode == "subspace" else None)
    inner_total = 0
    kept = 0
    while True:
        if cfg.mode == "subspace":
            if dense:
                X_hat = sol.approximation()
                R = residual(sys, X_hat)
            else:
                X_hat = None
                R = factored_residual(sys, sol)
            dim = basis.k
        else:
            R = _rank1_state_residual(sys, U, W, dense)
            X_hat = U @ W.T if dense else None
            dim = U.shape[1]
        if keep_iterates:
            result.iterates.append(X_hat)
            result.residuals.append(R)
        rel = _fro(R) / nb if nb > 0 else 0.0
        err = relative_error(X_ref, X_hat) if X_ref is not None and X_hat is not None else float("nan")
        report.add(IterRecord(dim, rel, err, kept=kept, millis=clock.millis()))
        if rel <= cfg.stop_tol:
            report.status = "converged"
            break
        if dim >= cfg.max_outer_ranks:
            report.status = "max_dim"
            break
        v0 = _start_vector(R, cfg, rng, n)
        if v0 is None:
            report.status = "stagnation"
            break
        if isinstance(R, np.ndarray) and cfg.symmetric:
            R = symmetrize(R)
        r1 = als_rank1(sys, R, v0, cfg=cfg)
        result.inner.append(r1)
        inner_total += r1.iterations
        if r1.degenerate:
            report.status = "stagnation"
            break
        if cfg.mode == "subspace":
            basis, kept = extend_orthonormal(basis, r1.v)
            if kept == 0:
                report.status = "stagnation"
                break
            sol = galerkin_solve(sys, basis)
            result.solution = sol
        else:
            U = np.column_stack([U, r1.v])
            W = U if cfg.symmetric else np.column_stack([W, r1.w])
            kept = 1
    result.left, result.right = U, W
    report.info["inner_iterations"] = inner_total
    report.info["unconverged_inner"] = sum(not r.converged for r in result.inner)
    if cfg.mode == "subspace":
        result.factorization = sol.factored()
    elif cfg.symmetric:
        result.factorization = LowRankFactorization(U, np.eye(U.shape[1]))
    else:
        # U W^T is not symmetric; store its symmetric part
        Z = np.column_stack([U, W])
        k = U.shape[1]
        D = np.zeros((2 * k, 2 * k))
        D[:k, k:] = 0.5 * np.eye(k)
        D[k:, :k] = 0.5 * np.eye(k)
        result.factorization = LowRankFactorization(Z, D)
    return result
