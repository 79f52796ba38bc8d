"""Bilinear iterative rational Krylov (BIRKA) and reduced-model H2 bookkeeping."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .config import DEFAULT
from .core import (
    BilinearSystem,
    IllPosedError,
    direct_solve,
    h2_norm_squared,
    lu_factor_quiet,
    m_norm_sq,
    shifted_solve,
    symmetrize,
    todense,
)
from .galerkin import project, solve_projected

# Kronecker systems with at most this many unknowns are factored densely
DENSE_SYLVESTER_MAX = 1500


def gen_sylvester_solve(A, Lam, N_list, Nhat_list, RHS):
    """Solve V Lam + A V + sum_i N_i V Nhat_i^T + RHS = 0 for the n x k matrix V.

    The vectorized operator is I kron A + Lam^T kron I + sum_i Nhat_i kron N_i.
    Complex ``Lam`` or ``Nhat_i`` give a complex V. Raises
    :class:`~genlyap.core.IllPosedError` when that operator is singular.
    """
    RHS = np.asarray(RHS)
    if RHS.ndim == 1:
        RHS = RHS.reshape(-1, 1)
    n, k = RHS.shape
    Lam = np.atleast_2d(np.asarray(Lam))
    Nhat_list = [np.atleast_2d(np.asarray(Nh)) for Nh in Nhat_list]
    if Lam.shape != (k, k) or any(Nh.shape != (k, k) for Nh in Nhat_list):
        raise ValueError("Lam and Nhat_i must be k x k with k = RHS.shape[1]")
    if len(Nhat_list) != len(N_list):
        raise ValueError("N_list and Nhat_list differ in length")
    if not np.any(RHS):
        return np.zeros((n, k), dtype=np.result_type(RHS, Lam, *Nhat_list))
    if k == 1:
        coeffs = [Nh[0, 0] for Nh in Nhat_list]
        return shifted_solve(A, Lam[0, 0], -RHS, N_list, coeffs).reshape(n, 1)
    dtype = np.result_type(float, Lam, RHS, *Nhat_list)
    b = -RHS.reshape(-1, order="F").astype(dtype)
    if n * k <= DENSE_SYLVESTER_MAX:
        I_n = np.eye(n)
        K = np.kron(np.eye(k), todense(A)) + np.kron(Lam.T, I_n)
        for N, Nh in zip(N_list, Nhat_list):
            K = K + np.kron(Nh, todense(N))
        lu, piv = lu_factor_quiet(K)
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-14 * d.max():
            raise IllPosedError("generalized Sylvester operator is singular")
        x = spla.lu_solve((lu, piv), b, check_finite=False)
    else:
        I_n = sps.identity(n, format="csc")
        K = sps.kron(sps.identity(k), sps.csc_matrix(A)) + sps.kron(sps.csc_matrix(Lam.T), I_n)
        for N, Nh in zip(N_list, Nhat_list):
            K = K + sps.kron(sps.csc_matrix(Nh), sps.csc_matrix(N))
        try:
            x = splu(K.astype(dtype).tocsc()).solve(b)
        except RuntimeError as exc:
            raise IllPosedError(f"generalized Sylvester operator is singular: {exc}") from exc
    return x.reshape(n, k, order="F")


def real_basis(V, k=None):
    """Orthonormal real basis of span(Re V, Im V), truncated to k columns."""
    V = np.asarray(V)
    k = V.shape[1] if k is None else k
    M = np.column_stack([V.real, V.imag]) if np.iscomplexobj(V) else V
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size < k or s[k - 1] <= 1e-14 * max(s[0], np.finfo(float).tiny):
        raise IllPosedError("iterate lost rank; cannot form a k-dimensional basis")
    return U[:, :k]


def _sort_eigs(lam):
    return np.lexsort((np.imag(lam), np.real(lam)))


@dataclass(frozen=True)
class BirkaConfig:
    """``change`` is ``"relative"`` (norm of the eigenvalue difference over the
    norm of the new eigenvalues) or ``"absolute"``."""

    k: int = 1
    tol: float = 1e-3
    max_iters: int = 100
    change: str = "relative"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not self.tol > 0 or self.max_iters < 1:
            raise ValueError("tol and max_iters must be positive")
        if self.change not in ("relative", "absolute"):
            raise ValueError(f"unknown change metric {self.change!r}")


@dataclass(frozen=True, eq=False)
class ReducedModel:
    A: np.ndarray
    N_list: tuple
    B: np.ndarray
    C: np.ndarray

    def to_system(self, symmetric=False):
        return BilinearSystem(self.A, self.N_list, self.B, self.C, symmetric=symmetric)


@dataclass(eq=False)
class BirkaResult:
    V: np.ndarray
    W: np.ndarray
    model: ReducedModel
    eigenvalues: np.ndarray
    iterations: int
    converged: bool
    changes: list = field(default_factory=list)
    conditions: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def _reduce(sys, V, W):
    M = W.T @ V
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > 1e14:
        raise IllPosedError(f"W^T V is singular (condition {cond:.3g})")
    A_t = np.linalg.solve(M, W.T @ np.asarray(sys.A @ V))
    N_t = tuple(np.linalg.solve(M, W.T @ np.asarray(N @ V)) for N in sys.N_list)
    B_t = np.linalg.solve(M, W.T @ sys.B)
    C_t = sys.C_out @ V
    return ReducedModel(A_t, N_t, B_t, C_t), cond


def _diagonalize(A_t, symmetric):
    if symmetric and np.linalg.norm(A_t - A_t.T) <= 1e-10 * max(np.linalg.norm(A_t), 1e-300):
        lam, R = np.linalg.eigh(symmetrize(A_t))
    else:
        lam, R = np.linalg.eig(A_t)
    order = _sort_eigs(lam)
    lam, R = lam[order], R[:, order]
    if np.linalg.cond(R) > 1e12:
        raise IllPosedError("reduced matrix is (numerically) defective")
    return lam, R


def birka(sys, V0=None, W0=None, cfg=BirkaConfig()):
    """Iterate interpolation subspaces towards a locally H2-optimal reduced model.

    Each sweep projects with the current (V, W), diagonalizes the reduced
    A, solves the two generalized Sylvester equations for new V and W and
    orthonormalizes them as real bases. The loop stops when the sorted
    eigenvalues of the reduced A change by at most ``cfg.tol``.

    ``V0`` defaults to a seeded random orthonormal n x k matrix and ``W0``
    to ``V0``. Non-convergence within ``cfg.max_iters`` is reported via
    ``converged=False``, not raised.
    """
    n, k = sys.n, cfg.k
    if V0 is None:
        V0 = np.linalg.qr(np.random.default_rng(cfg.seed).standard_normal((n, k)))[0]
    V = np.asarray(V0, dtype=float).reshape(n, -1)
    W = V.copy() if W0 is None else np.asarray(W0, dtype=float).reshape(n, -1)
    if V.shape[1] != k or W.shape[1] != k:
        raise ValueError(f"initial guesses must have k={k} columns")
    C = sys.C_out
    Nt_list = [N.T for N in sys.N_list]
    model, cond = _reduce(sys, V, W)
    lam_prev, R = _diagonalize(model.A, sys.symmetric)
    result = BirkaResult(V, W, model, lam_prev, 0, False, conditions=[cond])
    for it in range(1, cfg.max_iters + 1):
        Rinv = np.linalg.inv(R)
        B_hat = Rinv @ model.B
        C_hat = model.C @ R
        N_hat = [Rinv @ Nt @ R for Nt in model.N_list]
        Lam = np.diag(lam_prev)
        result.trace.append({
            "iteration": it,
            "B_change": float(np.linalg.norm(B_hat - model.B)),
            "C_change": float(np.linalg.norm(C_hat - model.C)),
            "N_change": float(sum(np.linalg.norm(a - b) for a, b in zip(N_hat, model.N_list))),
        })
        V_new = gen_sylvester_solve(sys.A, Lam, sys.N_list, N_hat, sys.B @ B_hat.T)
        AT = sys.A.T
        W_new = gen_sylvester_solve(AT, Lam, Nt_list, [Nh.T for Nh in N_hat], C.T @ C_hat)
        V = real_basis(V_new, k)
        W = real_basis(W_new, k)
        result.trace[-1]["V_W_angle"] = float(np.max(spla.subspace_angles(V, W)))
        model, cond = _reduce(sys, V, W)
        lam, R = _diagonalize(model.A, sys.symmetric)
        diff = float(np.linalg.norm(lam - lam_prev))
        change = diff if cfg.change == "absolute" else diff / max(float(np.linalg.norm(lam)), 1e-300)
        result.changes.append(change)
        result.conditions.append(cond)
        result.V, result.W, result.model, result.eigenvalues, result.iterations = V, W, model, lam, it
        lam_prev = lam
        if change <= cfg.tol:
            result.converged = True
            break
    return result


@dataclass(frozen=True)
class H2ErrorTerms:
    """Terms comparing a one-sided projection with the full system.

    ``m_norm_error_sq`` is ||X - V Y V^T||_M^2 with Y the projected
    solution; the identity m_norm_error_sq == h2_full_sq - h2_reduced_sq
    and the bound h2_error_system_sq <= h2_full_sq - h2_reduced_sq are the
    checks callers typically make.
    """

    m_norm_error_sq: float
    h2_full_sq: float
    h2_reduced_sq: float
    h2_error_system_sq: float

    @property
    def gap(self):
        return self.h2_full_sq - self.h2_reduced_sq - self.h2_error_system_sq


def error_system(sys, reduced):
    """Block system whose H2 norm is that of the difference of the two outputs."""
    A_e = spla.block_diag(sys.A_dense, reduced.A)
    N_e = tuple(spla.block_diag(N, Nr) for N, Nr in zip(sys.N_dense, reduced.N_list))
    B_e = np.vstack([sys.B, reduced.B])
    C_e = np.hstack([sys.C_out, -reduced.C])
    return BilinearSystem(A_e, N_e, B_e, C_e)


def reduced_h2_error_terms(sys, V, tol=None):
    """Energy-norm error and H2 norms for the Galerkin reduced model on span(V).

    Requires a symmetric system with C = B^T; all quantities come from the
    direct oracle.
    """
    if not sys.symmetric:
        raise ValueError("reduced_h2_error_terms needs a symmetric system")
    if sys.C is not None and not np.allclose(sys.C, sys.B.T):
        raise ValueError("reduced_h2_error_terms needs C = B^T")
    tol = tol or DEFAULT
    V = np.asarray(V, dtype=float)
    X = direct_solve(sys, tol)
    proj = project(sys, V)
    Y = solve_projected(proj, tol=tol).Y
    E = X - V @ Y @ V.T
    reduced = ReducedModel(proj.A_k, proj.N_list_k, proj.B_k, proj.B_k.T)
    full = float(np.trace(sys.B.T @ X @ sys.B))
    red = float(np.trace(proj.B_k.T @ Y @ proj.B_k))
    err = h2_norm_squared(error_system(sys, reduced), tol.with_(oracle_cap=max(tol.oracle_cap, 2 * sys.n)))
    return H2ErrorTerms(m_norm_sq(sys, E), full, red, err)


def reduced_operator_matrix(sys, V):
    """The k^2 x k^2 matrix (V kron V)^T M (V kron V) with M = -(L + Pi) in Kronecker form."""
    from .core import kron_operator

    VV = np.kron(V, V)
    return -VV.T @ kron_operator(sys) @ VV


def als_birka_pair(sys, v0, als_cfg, tol=None, max_iters=None):
    """Run symmetric ALS and rank-1 BIRKA (absolute change metric) from the same vector.

    Returns ``(als_result, birka_result)`` with the residual taken as B B^T.
    """
    from .als import als_rank1

    r1 = als_rank1(sys, sys.BBt, v0, cfg=als_cfg)
    bcfg = BirkaConfig(k=1, tol=tol or als_cfg.tol, max_iters=max_iters or als_cfg.max_inner_iters, change="absolute")
    b = birka(sys.with_B(sys.B, sys.B.T), np.asarray(v0, dtype=float).reshape(-1, 1), None, bcfg)
    return r1, b
