"""Simulation laboratory for scalar SDEs with superlinear, piecewise continuous drift."""

from .brownian import BrownianLattice, bridge_value, coarsen, sample
from .convergence import (
    ConvergenceConfig,
    ConvergenceReport,
    ErrorNorm,
    OverflowInEstimate,
    estimate_strong_error,
    fit_rate,
    moment_estimate,
    sign_change_statistic,
)
from .expr import Side, evaluate, extract_breakpoints, format_expr, parse
from .model import CheckGrid, SdeProblem, ValidationReport, grid_point, make_problem, validate
from .schemes import PathResult, SchemeKind, interpolate_on_fine_grid, simulate_path, tame, taming_growth_check
from .transform import Transform, build_transform, g, g_inverse, g_prime, g_second, transformed_coeffs

__all__ = [
    "BrownianLattice",
    "CheckGrid",
    "ConvergenceConfig",
    "ConvergenceReport",
    "ErrorNorm",
    "OverflowInEstimate",
    "PathResult",
    "SchemeKind",
    "SdeProblem",
    "Side",
    "Transform",
    "ValidationReport",
    "bridge_value",
    "build_transform",
    "coarsen",
    "estimate_strong_error",
    "evaluate",
    "extract_breakpoints",
    "fit_rate",
    "format_expr",
    "g",
    "g_inverse",
    "g_prime",
    "g_second",
    "grid_point",
    "interpolate_on_fine_grid",
    "make_problem",
    "moment_estimate",
    "parse",
    "sample",
    "sign_change_statistic",
    "simulate_path",
    "tame",
    "taming_growth_check",
    "transformed_coeffs",
    "validate",
]

__version__ = "0.1.0"
