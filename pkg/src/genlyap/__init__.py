"""Low-rank and reference solvers for the generalized Lyapunov equation."""

from .config import DEFAULT, Tolerances
from .core import (
    BilinearSystem,
    DimensionError,
    IllPosedError,
    LowRankFactorization,
    LyapunovSolver,
    OracleCapError,
    UnstableError,
    apply_lyap,
    apply_pi,
    check_contraction,
    direct_solve,
    dominant_left_singular_vectors,
    h2_norm_squared,
    lyap_solve,
    m_inner,
    psd_slack,
    psd_within,
    relative_residual,
    residual,
    residual_psd_slack,
    shifted_solve,
)
from .io import read_system, write_system
from .report import SolveReport

__version__ = "0.1.0"
