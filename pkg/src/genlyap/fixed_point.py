"""Fixed-point iteration X_{k+1} = -L^{-1}(Pi(X_k) + B B^T) and its residual form."""

from dataclasses import dataclass, field

import numpy as np

from .core import apply_pi, dominant_left_singular_vectors, residual, symmetrize
from .galerkin import SubspaceBasis, extend_orthonormal, galerkin_solve
from .report import IterRecord, SolveReport, Stopwatch, relative_error


@dataclass(frozen=True)
class FixedPointConfig:
    """``mode`` is ``"splitting"`` (solve L(X_{k+1}) = -Pi(X_k) - B B^T) or
    ``"residual"`` (X_{k+1} = X_k - L^{-1}(R_k)). Both produce the same
    iterates in exact arithmetic."""

    max_iters: int = 200
    stop_tol: float = 1e-8
    mode: str = "splitting"
    divergence_window: int = 5

    def __post_init__(self):
        if self.mode not in ("splitting", "residual"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.stop_tol > 0 or self.max_iters < 1 or self.divergence_window < 1:
            raise ValueError("tolerances and limits must be positive")


@dataclass(eq=False)
class FixedPointResult:
    report: SolveReport
    X: np.ndarray
    iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def fixed_point_solve(sys, cfg=FixedPointConfig(), X_ref=None, keep_iterates=False):
    """Dense fixed-point iteration from X_0 = 0.

    The report holds one record per iterate with ``dim`` set to the
    iteration index. The run stops on relative residual at most
    ``cfg.stop_tol`` (status ``converged``), after ``cfg.max_iters`` steps
    (``max_iters``) or once the residual norm has grown in
    ``cfg.divergence_window`` consecutive steps (``diverged``).
    """
    lyap = sys.lyap
    report = SolveReport(f"FixedPoint-{cfg.mode}", info={"mode": cfg.mode})
    clock = Stopwatch()
    nb = float(np.linalg.norm(sys.BBt))
    X = np.zeros((sys.n, sys.n))
    result = FixedPointResult(report, X)
    growth = 0
    prev = np.inf
    for k in range(cfg.max_iters + 1):
        R = residual(sys, X)
        if sys.symmetric:
            R = symmetrize(R)
        nr = float(np.linalg.norm(R))
        rel = nr / nb if nb > 0 else nr
        report.add(IterRecord(k, rel, relative_error(X_ref, X), millis=clock.millis()))
        if keep_iterates:
            result.iterates.append(X)
            result.residuals.append(R)
        if rel <= cfg.stop_tol:
            report.status = "converged"
            break
        growth = growth + 1 if nr > prev else 0
        prev = nr
        if growth >= cfg.divergence_window:
            report.status = "diverged"
            break
        if k == cfg.max_iters:
            report.status = "max_iters"
            break
        if cfg.mode == "splitting":
            X = lyap.solve(apply_pi(sys, X) + sys.BBt)
        else:
            X = X - lyap.solve(-R)
        if sys.symmetric:
            X = symmetrize(X)
    result.X = X
    return result


def fixed_point_subspace(sys, vectors_per_step=1, max_dim=50, stop_tol=1e-8, X_ref=None):
    """Experimental: grow a Galerkin basis from dominant singular vectors of L^{-1}(R_k).

    Every step forms the dense correction L^{-1}(R_k), which costs a full
    Lyapunov solve; this is a reference implementation with no
    performance claims.
    """
    report = SolveReport("FixedPoint-subspace")
    clock = Stopwatch()
    nb = float(np.linalg.norm(sys.BBt))
    basis = SubspaceBasis.empty(sys.n)
    sol = galerkin_solve(sys, basis)
    kept = 0
    while True:
        X_hat = sol.approximation()
        R = residual(sys, X_hat)
        rel = float(np.linalg.norm(R)) / nb if nb > 0 else 0.0
        report.add(IterRecord(basis.k, rel, relative_error(X_ref, X_hat), kept=kept, millis=clock.millis()))
        if rel <= stop_tol:
            report.status = "converged"
            break
        if basis.k >= max_dim:
            report.status = "max_dim"
            break
        corr = sys.lyap.solve(-R)
        try:
            U = dominant_left_singular_vectors(corr, vectors_per_step)
        except ValueError:
            report.status = "stagnation"
            break
        basis, kept = extend_orthonormal(basis, U)
        if kept == 0:
            report.status = "stagnation"
            break
        sol = galerkin_solve(sys, basis)
    return report, sol
