"""Contour-integral eigensolver (FEAST) with inexact shifted Krylov solves."""

from .analysis import (
    BoundReport,
    FilterSpectrum,
    SubspaceDeficientError,
    bracket_interval,
    delta_value,
    filter_spectrum,
    fom_equivalence_check,
    oblique_error,
    predicted_rate,
    restarted_block_arnoldi,
    verify_bound,
)
from .contour import ContourPoleError, ContourRule, accumulate_Q, build_trapezoid, filter_value
from .feast import EigenResult, IFEASTConfig, IterationLog, compute_residual, feast_direct, ifeast_solve
from .krylov import ShiftedSolveReport, ShiftedSolveRequest, solve_shifted
from .linalg import (
    HermitianOperator,
    SingularShiftError,
    dense_eig,
    dense_shifted_solve,
    orthonormalize,
    reduced_solve,
)
from .mmio import MatrixMarketError, read_matrix_market, write_matrix_market

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
