"""Numerical thresholds shared by every solver in the package."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Default thresholds; pass a modified copy to tighten or loosen checks.

    Attributes
    ----------
    sym_system
        Relative Frobenius asymmetry allowed for A and N_i when a system
        is declared symmetric.
    sym_matrix
        Relative asymmetry allowed for a solution or residual matrix.
    residual
        Relative residual required of the direct and Lyapunov solvers.
    drop
        Column rejection threshold in basis orthogonalization.
    psd
        Relative negative-eigenvalue slack when testing semidefiniteness.
    dense_kron_max
        Largest n for which the direct oracle factors the n^2 x n^2
        Kronecker matrix densely; above it a preconditioned Krylov solve
        is used.
    oracle_cap
        Largest n the direct oracle accepts at all.
    dense_eig_max
        Largest n for which the contraction value is computed from the
        dense Kronecker eigenvalues.
    """

    sym_system: float = 1e-12
    sym_matrix: float = 1e-10
    residual: float = 1e-10
    drop: float = 1e-10
    psd: float = 1e-8
    dense_kron_max: int = 64
    oracle_cap: int = 500
    dense_eig_max: int = 30

    def with_(self, **changes) -> "Tolerances":
        return replace(self, **changes)


DEFAULT = Tolerances()
