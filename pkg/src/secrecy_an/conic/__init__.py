"""Small dense SDP modelling layer and interior-point solver."""

from .ipm import SolverSettings
from .program import Affine, ConicProgram, MatAffine, hermitian_const
from .solve import KKTReport, SolverResult, check_kkt, near_optimal, solve

__all__ = [
    "Affine",
    "ConicProgram",
    "KKTReport",
    "MatAffine",
    "SolverResult",
    "SolverSettings",
    "check_kkt",
    "hermitian_const",
    "near_optimal",
    "solve",
]
