"""Orthonormal bases, projected equations and Galerkin residuals."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla
from scipy.sparse.linalg import LinearOperator

from .config import DEFAULT
from .core import (
    BilinearSystem,
    LowRankFactorization,
    direct_solve,
    residual,
    symmetrize,
    todense,
)

# factored residual norms are used above this n
DENSE_RESIDUAL_MAX = 500


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Immutable orthonormal basis; extension returns a new instance."""

    V: np.ndarray
    drop_tol: float = DEFAULT.drop

    @classmethod
    def empty(cls, n, drop_tol=DEFAULT.drop):
        return cls(np.zeros((n, 0)), drop_tol)

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def k(self):
        return self.V.shape[1]

    def orthonormality_error(self):
        return float(np.linalg.norm(self.V.T @ self.V - np.eye(self.k)))


def extend_orthonormal(basis, candidates):
    """Append the parts of ``candidates`` orthogonal to ``basis``.

    Columns are processed in order with two passes of classical Gram-Schmidt
    against everything accepted so far. A column is dropped when what remains
    has norm at most ``drop_tol`` times its original norm.

    Returns
    -------
    (SubspaceBasis, int)
        The extended basis and the number of columns kept.
    """
    C = np.asarray(candidates, dtype=float)
    if C.ndim == 1:
        C = C.reshape(-1, 1)
    if C.shape[0] != basis.n:
        raise ValueError(f"candidates have {C.shape[0]} rows, basis has {basis.n}")
    V = basis.V
    kept = 0
    for j in range(C.shape[1]):
        c = C[:, j].copy()
        nrm0 = np.linalg.norm(c)
        if nrm0 == 0.0 or not np.isfinite(nrm0):
            continue
        for _ in range(2):
            c -= V @ (V.T @ c)
        nrm = np.linalg.norm(c)
        if nrm <= basis.drop_tol * nrm0:
            continue
        V = np.column_stack([V, c / nrm])
        kept += 1
    return SubspaceBasis(V, basis.drop_tol), kept


def orth(M, drop_tol=DEFAULT.drop):
    """Orthonormal basis (as an array) of the column span of M."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    basis, _ = extend_orthonormal(SubspaceBasis.empty(M.shape[0], drop_tol), M)
    return basis.V


@dataclass(frozen=True, eq=False)
class ProjectedSystem:
    A_k: np.ndarray
    N_list_k: tuple
    B_k: np.ndarray
    symmetric: bool = False

    @property
    def k(self):
        return self.A_k.shape[0]

    def to_system(self):
        return BilinearSystem(self.A_k, self.N_list_k, self.B_k, symmetric=self.symmetric)


def project(sys, basis):
    """V^T A V, V^T N_i V and V^T B."""
    V = basis.V if isinstance(basis, SubspaceBasis) else np.asarray(basis)
    Ak = V.T @ np.asarray(sys.A @ V)
    Nk = tuple(V.T @ np.asarray(N @ V) for N in sys.N_list)
    if sys.symmetric:
        Ak = symmetrize(Ak)
        Nk = tuple(symmetrize(N) for N in Nk)
    return ProjectedSystem(Ak, Nk, V.T @ sys.B, sys.symmetric)


@dataclass(frozen=True, eq=False)
class GalerkinSolution:
    Y: np.ndarray
    basis: SubspaceBasis

    @property
    def V(self):
        return self.basis.V

    def approximation(self):
        return self.V @ self.Y @ self.V.T

    def factored(self):
        return LowRankFactorization(self.V, self.Y)


def solve_projected(proj, basis=None, tol=None):
    """Solve A_k Y + Y A_k^T + sum N_ik Y N_ik^T + B_k B_k^T = 0 with the direct oracle.

    Raises :class:`~genlyap.core.IllPosedError` when the projected operator
    is singular.
    """
    k = proj.k
    if k == 0:
        Y = np.zeros((0, 0))
    else:
        tol = (tol or DEFAULT).with_(residual=1e-9, oracle_cap=max(DEFAULT.oracle_cap, k))
        Y = direct_solve(proj.to_system(), tol)
    if basis is None:
        basis = SubspaceBasis(np.zeros((0, k)))
    return GalerkinSolution(Y, basis)


def galerkin_solve(sys, basis, tol=None):
    return solve_projected(project(sys, basis), basis, tol)


def factored_residual(sys, sol):
    """Residual of V Y V^T as Z D Z^T with Z = [V, A V, N_1 V, ..., N_m V, B]."""
    V, Y = sol.V, sol.Y
    k = V.shape[1]
    blocks = [V, np.asarray(sys.A @ V)] + [np.asarray(N @ V) for N in sys.N_list] + [sys.B]
    Z = np.column_stack(blocks)
    sizes = [k, k] + [k] * sys.m + [sys.r]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    D = np.zeros((offs[-1], offs[-1]))

    def put(i, j, M):
        D[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = M

    if k:
        put(1, 0, Y)  # A V Y V^T
        put(0, 1, Y)  # V Y V^T A^T
        for i in range(sys.m):
            put(2 + i, 2 + i, Y)
    put(2 + sys.m, 2 + sys.m, np.eye(sys.r))
    return LowRankFactorization(Z, symmetrize(D))


def galerkin_residual(sys, sol, dense=None):
    """Residual of the Galerkin approximation, dense and factored.

    Returns ``(R, F)`` where ``F`` is a :class:`LowRankFactorization` of R.
    The dense ``R`` is skipped (``None``) for n above 500 unless requested.
    """
    F = factored_residual(sys, sol)
    if dense is None:
        dense = sys.n <= DENSE_RESIDUAL_MAX
    R = residual(sys, sol.approximation()) if dense else None
    return R, F


def residual_norm(sys, sol):
    if sys.n <= DENSE_RESIDUAL_MAX:
        return float(np.linalg.norm(residual(sys, sol.approximation())))
    return factored_residual(sys, sol).fro_norm()


def residual_operator(sys, sol):
    """Matrix-free residual: products with V Y V^T and the coefficients only."""
    V, Y = sol.V, sol.Y
    A = sys.A
    Ns = sys.N_list
    B = sys.B

    def X(x):
        return V @ (Y @ (V.T @ x))

    def Xt(x):
        return V @ (Y.T @ (V.T @ x))

    def mv(x):
        x = np.ravel(x)
        out = A @ X(x) + X(A.T @ x) + B @ (B.T @ x)
        for N in Ns:
            out = out + N @ X(N.T @ x)
        return np.asarray(out).ravel()

    def rmv(x):
        x = np.ravel(x)
        out = Xt(A.T @ x) + A @ Xt(x) + B @ (B.T @ x)
        for N in Ns:
            out = out + N @ Xt(N.T @ x)
        return np.asarray(out).ravel()

    return LinearOperator((sys.n, sys.n), matvec=mv, rmatvec=rmv, dtype=float)


def svd_best_rank(X, k):
    """Frobenius-optimal rank-k truncation of a symmetric matrix."""
    X = symmetrize(np.asarray(X, dtype=float))
    n = X.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    lam, U = np.linalg.eigh(X)
    idx = np.argsort(-np.abs(lam), kind="stable")[:k]
    return LowRankFactorization(U[:, idx], np.diag(lam[idx]))


def svd_baseline_errors(X, ks):
    """Relative Frobenius error of the best rank-k approximation for each k."""
    s = np.linalg.svd(X, compute_uv=False)
    total = np.sqrt(np.sum(s**2))
    tail = np.sqrt(np.maximum(np.cumsum((s**2)[::-1])[::-1], 0.0))
    out = []
    for k in ks:
        out.append(float(tail[k] / total) if k < len(s) else 0.0)
    return out


def containment(M, V):
    """Relative distance of range(M) from span(V): ||(I - V V^T) M||_2 / ||M||_2."""
    M = np.asarray(M)
    nrm = np.linalg.norm(M, 2)
    if nrm == 0.0:
        return 0.0
    P = M - V @ (V.conj().T @ M) if V.shape[1] else M
    return float(np.linalg.norm(P, 2) / nrm)


def max_angle(U, V):
    """Largest principal angle between two column spans."""
    return float(np.max(spla.subspace_angles(todense(U), todense(V))))
