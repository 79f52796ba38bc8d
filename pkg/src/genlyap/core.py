"""System data model and the operators of the generalized Lyapunov equation

    A X + X A^T + sum_i N_i X N_i^T + B B^T = 0.

Everything here is a pure function of its inputs. Matrices of a
:class:`BilinearSystem` may be dense ``ndarray`` or ``scipy.sparse``;
solution candidates, residuals and Gramians are always dense ``ndarray``.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps
from scipy.sparse.linalg import LinearOperator, eigs, gmres, splu, svds

from .config import DEFAULT, Tolerances


class DimensionError(ValueError):
    pass


class IllPosedError(RuntimeError):
    """The equation (or a projected/auxiliary one) has no unique solution."""


class OracleCapError(ValueError):
    pass


class UnstableError(ValueError):
    pass


def todense(M):
    if sps.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def symmetrize(X):
    return 0.5 * (X + X.T)


def _rel_asym(M):
    M = todense(M)
    nrm = np.linalg.norm(M)
    if nrm == 0.0:
        return 0.0
    return np.linalg.norm(M - M.T) / nrm


@dataclass(frozen=True, eq=False)
class BilinearSystem:
    """Coefficients of the bilinear control system

        x' = A x + sum_i N_i x w_i + B u,    y = C x.

    ``C`` defaults to ``B^T``. Setting ``symmetric=True`` asserts that A and
    all N_i are symmetric; the claim is verified at construction.
    """

    A: object
    N_list: tuple = ()
    B: object = None
    C: object = None
    symmetric: bool = False
    tol: Tolerances = field(default=DEFAULT, repr=False, compare=False)

    def __post_init__(self):
        A = self.A if sps.issparse(self.A) else np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        Ns = []
        for i, N in enumerate(self.N_list):
            N = N if sps.issparse(N) else np.atleast_2d(np.asarray(N, dtype=float))
            if N.shape != (n, n):
                raise DimensionError(f"N_{i + 1} has shape {N.shape}, expected {(n, n)}")
            Ns.append(N)
        object.__setattr__(self, "N_list", tuple(Ns))
        if self.B is None:
            raise DimensionError("B is required")
        B = todense(self.B)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.ndim == 0 or B.shape[0] != n:
            raise DimensionError(f"B has shape {B.shape}, expected ({n}, r)")
        object.__setattr__(self, "B", B)
        if self.C is not None:
            C = todense(self.C)
            if C.ndim == 1:
                C = C.reshape(1, -1)
            if C.shape[1] != n:
                raise DimensionError(f"C has shape {C.shape}, expected (r_c, {n})")
            object.__setattr__(self, "C", C)
        if self.symmetric:
            eps = self.tol.sym_system
            if _rel_asym(A) > eps:
                raise ValueError("symmetric=True but A is not symmetric")
            for i, N in enumerate(Ns):
                if _rel_asym(N) > eps:
                    raise ValueError(f"symmetric=True but N_{i + 1} is not symmetric")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return len(self.N_list)

    @property
    def r(self):
        return self.B.shape[1]

    @property
    def C_out(self):
        return self.B.T if self.C is None else self.C

    @cached_property
    def A_dense(self):
        return todense(self.A)

    @cached_property
    def N_dense(self):
        return tuple(todense(N) for N in self.N_list)

    @cached_property
    def BBt(self):
        return self.B @ self.B.T

    @cached_property
    def lyap(self):
        """Cached :class:`LyapunovSolver` for A."""
        return LyapunovSolver(self.A_dense)

    def dual(self):
        """System whose controllability equation is this one's observability equation."""
        return BilinearSystem(
            self.A_dense.T,
            tuple(N.T for N in self.N_dense),
            self.C_out.T,
            self.B.T,
            symmetric=self.symmetric,
            tol=self.tol,
        )

    def with_B(self, B, C=None):
        return BilinearSystem(self.A, self.N_list, B, C, self.symmetric, self.tol)

    def eigvals_A(self):
        return np.linalg.eigvals(self.A_dense)

    def is_stable(self):
        return bool(np.max(self.eigvals_A().real) < 0)


@dataclass(frozen=True, eq=False)
class LowRankFactorization:
    """The symmetric matrix ``Z @ D @ Z.T`` kept in factored form."""

    Z: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape != (Z.shape[1], Z.shape[1]):
            raise DimensionError(f"D has shape {D.shape}, Z has {Z.shape[1]} columns")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "D", D)

    @property
    def shape(self):
        return (self.Z.shape[0], self.Z.shape[0])

    @property
    def k(self):
        return self.Z.shape[1]

    def to_dense(self):
        return self.Z @ self.D @ self.Z.T

    def matvec(self, x):
        return self.Z @ (self.D @ (self.Z.T @ x))

    def compressed(self):
        """Return ``(Q, core)`` with orthonormal Q and ``Q core Q^T == Z D Z^T``."""
        if self.k == 0:
            return np.zeros((self.Z.shape[0], 0)), np.zeros((0, 0))
        Q, T = np.linalg.qr(self.Z)
        return Q, T @ self.D @ T.T

    def fro_norm(self):
        _, core = self.compressed()
        return float(np.linalg.norm(core))


def _check_square(sys, X):
    X = np.asarray(X, dtype=float)
    if X.shape != (sys.n, sys.n):
        raise DimensionError(f"expected {(sys.n, sys.n)} matrix, got {X.shape}")
    return X


def apply_lyap(sys, X):
    """A X + X A^T."""
    X = _check_square(sys, X)
    AX = np.asarray(sys.A @ X)
    return AX + np.asarray(sys.A @ X.T).T


def apply_pi(sys, X):
    """sum_i N_i X N_i^T."""
    X = _check_square(sys, X)
    out = np.zeros_like(X)
    for N in sys.N_list:
        NX = np.asarray(N @ X)
        out += np.asarray(N @ NX.T).T
    return out


def residual(sys, Xhat):
    """Generic residual L(Xhat) + Pi(Xhat) + B B^T."""
    return apply_lyap(sys, Xhat) + apply_pi(sys, Xhat) + sys.BBt


def relative_residual(sys, Xhat):
    nb = np.linalg.norm(sys.BBt)
    R = residual(sys, Xhat)
    return float(np.linalg.norm(R) / nb) if nb > 0 else float(np.linalg.norm(R))


def m_inner(sys, X, Y):
    """Energy inner product trace(X^T (-L(Y) - Pi(Y))).

    Only a genuine inner product for symmetric systems whose operator
    -L - Pi has spectrum in the open right half plane; non-symmetric systems
    are refused because the form is generally indefinite there.
    """
    if not sys.symmetric:
        raise ValueError("the energy inner product requires a symmetric system")
    X = _check_square(sys, X)
    MY = -apply_lyap(sys, Y) - apply_pi(sys, Y)
    return float(np.sum(X * MY))


def m_norm_sq(sys, X):
    return m_inner(sys, X, X)


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, n):
    return np.asarray(x).reshape(n, n, order="F")


def kron_lyap(A):
    """Matrix of X -> A X + X A^T acting on column-stacked vec(X)."""
    A = todense(A)
    I = np.eye(A.shape[0])
    return np.kron(I, A) + np.kron(A, I)


def kron_pi(N_list, n):
    P = np.zeros((n * n, n * n))
    for N in N_list:
        N = todense(N)
        P += np.kron(N, N)
    return P


def kron_operator(sys):
    """Kronecker matrix of L + Pi."""
    return kron_lyap(sys.A_dense) + kron_pi(sys.N_dense, sys.n)


class LyapunovSolver:
    """Solves A X + X A^T + RHS = 0 for a fixed A.

    The real Schur form of A is computed once; each solve is a triangular
    Sylvester back-substitution (LAPACK ``trsyl``).
    """

    def __init__(self, A):
        A = todense(A)
        self.n = A.shape[0]
        self.T, self.U = spla.schur(A, output="real")
        lam = np.linalg.eigvals(A) if self.n else np.zeros(0)
        scale = max(1.0, float(np.max(np.abs(lam)))) if self.n else 1.0
        sums = lam[:, None] + lam[None, :]
        if self.n and np.min(np.abs(sums)) <= 1e3 * np.finfo(float).eps * scale:
            raise IllPosedError("A has eigenvalues with lambda_i + lambda_j = 0; Lyapunov operator singular")
        self.eigvals = lam

    def solve(self, RHS):
        RHS = np.asarray(RHS, dtype=float)
        if self.n == 0:
            return np.zeros((0, 0))
        C = self.U.T @ RHS @ self.U
        Y, scale, info = spla.lapack.dtrsyl(self.T, self.T, -C, trana="N", tranb="T", isgn=1)
        if info < 0:
            raise RuntimeError(f"trsyl argument error {info}")
        return self.U @ (Y / scale) @ self.U.T


def lyap_solve(A, RHS):
    """X with A X + X A^T + RHS = 0 (returned symmetrized when RHS is symmetric)."""
    RHS = np.asarray(RHS, dtype=float)
    X = LyapunovSolver(A).solve(RHS)
    if np.allclose(RHS, RHS.T, rtol=0, atol=1e-14 * max(1.0, np.abs(RHS).max(initial=0.0))):
        X = symmetrize(X)
    return X


def _direct_dense(sys):
    n = sys.n
    K = kron_operator(sys)
    try:
        lu = lu_factor_quiet(K)
    except (spla.LinAlgError, ValueError) as exc:
        raise IllPosedError(f"Kronecker matrix factorization failed: {exc}") from exc
    diag = np.abs(np.diag(lu[0]))
    # scale of the operator, so a near-cancelling 1x1 case is still caught
    scale = 2.0 * np.linalg.norm(sys.A_dense, 2) + sum(np.linalg.norm(N, 2) ** 2 for N in sys.N_dense)
    if diag.min() <= 1e-14 * max(diag.max(), scale):
        raise IllPosedError("Kronecker matrix of L + Pi is singular")
    return unvec(spla.lu_solve(lu, -vec(sys.BBt)), n)


def _direct_krylov(sys, rhs, max_refine=3, target=1e-13):
    """Solve L(X) + Pi(X) = rhs by GMRES on (I + L^-1 Pi) with iterative refinement."""
    n = sys.n
    lyap = sys.lyap

    def op(x):
        X = unvec(x, n)
        return vec(X + lyap.solve(-apply_pi(sys, X)))

    M = LinearOperator((n * n, n * n), matvec=op, dtype=float)
    X = np.zeros((n, n))
    nrhs = np.linalg.norm(rhs)
    R = rhs.copy()
    for _ in range(max_refine + 1):
        # L(E) + Pi(E) = R  <=>  E + L^-1 Pi E = L^-1 R
        b = vec(lyap.solve(-R))
        e, info = gmres(M, b, rtol=1e-15, atol=0.0, restart=min(n * n, 100), maxiter=50)
        X = X + unvec(e, n)
        R = rhs - apply_lyap(sys, X) - apply_pi(sys, X)
        if np.linalg.norm(R) <= target * nrhs:
            break
    return X


def direct_solve(sys, tol=None):
    """Full solution of the generalized Lyapunov equation (the reference oracle).

    For ``n <= tol.dense_kron_max`` the n^2 x n^2 Kronecker system is LU
    factored. Larger problems, up to ``tol.oracle_cap``, are solved by GMRES
    on the Lyapunov-preconditioned operator with iterative refinement.
    The result is symmetrized and checked to reach ``tol.residual``.
    """
    tol = tol or sys.tol
    n = sys.n
    if n > tol.oracle_cap:
        raise OracleCapError(f"n={n} exceeds oracle cap {tol.oracle_cap}")
    nb = np.linalg.norm(sys.BBt)
    if nb == 0.0:
        return np.zeros((n, n))
    if n <= tol.dense_kron_max:
        X = _direct_dense(sys)
    else:
        X = _direct_krylov(sys, -sys.BBt)
    X = symmetrize(X)
    rel = np.linalg.norm(residual(sys, X)) / nb
    if not np.isfinite(rel) or rel > tol.residual:
        raise IllPosedError(f"direct solve reached relative residual {rel:.3e} > {tol.residual:.1e}")
    return X


def check_contraction(sys, tol=None, seed=0):
    """Spectral radius of L^-1 Pi."""
    tol = tol or sys.tol
    if not sys.is_stable():
        raise UnstableError("A is not stable")
    if sys.m == 0:
        return 0.0
    n = sys.n
    if n <= tol.dense_eig_max:
        T = np.linalg.solve(kron_lyap(sys.A_dense), kron_pi(sys.N_dense, n))
        return float(np.max(np.abs(np.linalg.eigvals(T))))
    lyap = sys.lyap
    op = LinearOperator(
        (n * n, n * n),
        matvec=lambda x: vec(lyap.solve(-apply_pi(sys, unvec(x, n)))),
        dtype=float,
    )
    v0 = np.random.default_rng(seed).standard_normal(n * n)
    vals = eigs(op, k=1, which="LM", v0=v0, tol=1e-10, return_eigenvectors=False)
    return float(np.abs(vals[0]))


def h2_norm_squared(sys, tol=None, check_rtol=1e-8):
    """Squared bilinear H2 norm trace(B^T Q B), cross-checked against trace(C P C^T)."""
    C = sys.C_out
    if np.linalg.norm(sys.B) == 0.0 or np.linalg.norm(C) == 0.0:
        return 0.0
    P = direct_solve(sys, tol)
    Q = direct_solve(sys.dual(), tol)
    via_p = float(np.trace(C @ P @ C.T))
    via_q = float(np.trace(sys.B.T @ Q @ sys.B))
    if abs(via_p - via_q) > check_rtol * max(abs(via_p), abs(via_q)):
        raise IllPosedError(f"Gramian traces disagree: {via_p!r} vs {via_q!r}")
    return via_q


def min_eig_ratio(X):
    """Smallest eigenvalue of sym(X) relative to ||X||_F (0 for X == 0)."""
    X = symmetrize(np.asarray(X, dtype=float))
    nrm = np.linalg.norm(X)
    if nrm == 0.0:
        return 0.0
    return float(np.linalg.eigvalsh(X)[0] / nrm)


def is_psd(X, tol=DEFAULT.psd):
    return min_eig_ratio(X) >= -tol


def _fro(M):
    return float(sps.linalg.norm(M) if sps.issparse(M) else np.linalg.norm(M))


def residual_rounding_floor(sys, Xhat):
    """Bound on the rounding error in forming the residual of ``Xhat``.

    eps * (2 ||A|| ||X|| + sum ||N_i||^2 ||X|| + ||B B^T||) in Frobenius
    norms. Eigenvalue checks on a residual cannot resolve anything below
    this.
    """
    nx = float(np.linalg.norm(Xhat))
    total = 2.0 * _fro(sys.A) * nx + sum(_fro(N) ** 2 for N in sys.N_list) * nx
    return float(np.finfo(float).eps * (total + np.linalg.norm(sys.BBt)))


def psd_slack(M, scale, rel=DEFAULT.psd):
    """Allowed negative eigenvalue of M: max(rel ||M||_F, n eps scale).

    ``scale`` is the size of the quantities M was computed from, e.g.
    ||X|| when M = X - X_k; the second term is the rounding floor of the
    subtraction.
    """
    n = np.shape(M)[0]
    return max(rel * float(np.linalg.norm(M)), n * np.finfo(float).eps * float(scale))


def residual_psd_slack(sys, Xhat, R, rel=DEFAULT.psd):
    """Allowed negative eigenvalue of a residual: max(rel ||R||_F, rounding floor)."""
    return max(rel * float(np.linalg.norm(R)), residual_rounding_floor(sys, Xhat))


def psd_within(M, slack):
    """Smallest eigenvalue of symmetric M is at least -slack."""
    return bool(np.linalg.eigvalsh(symmetrize(M))[0] >= -slack)


def _fix_signs(U):
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def dominant_left_singular_vectors(R, count=1, method="dense", tol=1e-8, rank_tol=1e-12, seed=0):
    """Leading ``count`` left singular vectors of R.

    ``R`` may be a dense array, a :class:`LowRankFactorization` (handled
    exactly through its compressed core) or a ``LinearOperator`` exposing
    products with R and R^T. ``method="iterative"`` uses a Lanczos SVD to
    tolerance ``tol``. Columns are sign-normalized so the largest-magnitude
    entry is positive.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if method == "dense" and not isinstance(R, LinearOperator):
        if isinstance(R, LowRankFactorization):
            Q, core = R.compressed()
            Uc, s, _ = np.linalg.svd(core)
            U = Q @ Uc
        else:
            U, s, _ = np.linalg.svd(np.asarray(R, dtype=float))
        rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        if count > rank:
            raise ValueError(f"requested {count} singular vectors of a rank-{rank} matrix")
        return _fix_signs(U[:, :count])
    if method not in ("dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(R, LowRankFactorization):
        op = LinearOperator(R.shape, matvec=R.matvec, rmatvec=R.matvec, dtype=float)
    elif isinstance(R, LinearOperator):
        op = R
    else:
        op = np.asarray(R, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(op.shape[1])
    U, s, _ = svds(op, k=count, tol=tol, v0=v0, which="LM")
    order = np.argsort(s)[::-1]
    if s[order][-1] <= rank_tol * max(s[order][0], np.finfo(float).tiny):
        raise ValueError(f"requested {count} singular vectors but the matrix has lower rank")
    return _fix_signs(U[:, order])


def lu_factor_quiet(M):
    """``scipy.linalg.lu_factor`` without the singular-matrix warning.

    Callers inspect the pivots themselves and raise :class:`IllPosedError`.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.LinAlgWarning)
        return spla.lu_factor(M, check_finite=False)


def shifted_matrix(A, shift=0.0, N_list=(), coeffs=()):
    """A + shift I + sum_i coeffs[i] N_i, sparse if A is sparse."""
    n = A.shape[0]
    if sps.issparse(A):
        M = sps.csc_matrix(A, dtype=np.result_type(float, shift, *coeffs))
        M = M + shift * sps.identity(n, format="csc")
        for c, N in zip(coeffs, N_list):
            M = M + c * sps.csc_matrix(N)
        return M.tocsc()
    M = np.array(A, dtype=np.result_type(float, shift, *coeffs))
    M[np.diag_indices(n)] += shift
    for c, N in zip(coeffs, N_list):
        M = M + c * todense(N)
    return M


def shifted_solve(A, shift, rhs, N_list=(), coeffs=(), pivot_tol=1e-14):
    """Solve (A + shift I + sum_i c_i N_i) x = rhs.

    ``shift`` and the coefficients may be complex. Raises
    :class:`IllPosedError` when the shifted matrix is numerically singular.
    """
    M = shifted_matrix(A, shift, N_list, coeffs)
    rhs = np.asarray(rhs)
    if sps.issparse(M):
        try:
            lu = splu(M)
        except RuntimeError as exc:
            raise IllPosedError(f"shifted matrix is singular: {exc}") from exc
        diag = np.abs(lu.U.diagonal())
        if diag.min() <= pivot_tol * diag.max():
            raise IllPosedError("shifted matrix is numerically singular")
        dt = np.result_type(M.dtype, rhs.dtype)
        if np.iscomplexobj(np.empty(0, dt)) and not np.iscomplexobj(M.data):
            return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
        return lu.solve(rhs.astype(dt, copy=False))
    lu, piv = lu_factor_quiet(M)
    diag = np.abs(np.diag(lu))
    if diag.min() <= pivot_tol * max(diag.max(), np.finfo(float).tiny):
        raise IllPosedError("shifted matrix is numerically singular")
    return spla.lu_solve((lu, piv), rhs, check_finite=False)
