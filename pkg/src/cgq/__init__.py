"""Continuous Galerkin cG(q) time stepping in arbitrary precision.

The package solves initial value problems with the cG(q) method at any
working precision, solves the linearized dual problem backwards in time,
and turns both into a posteriori bounds that separate the data,
discretization and computational (round-off) parts of the error.
"""

from .numerics import PrecisionContext, make_context
from .discretization import Partition, gauss_rule, lagrange_basis
from .problems import lorenz, van_der_pol, linear_test, scalar_decay
from .primal import SolverConfig, solve_cg, NonConvergence
from .residual import discrete_residual, continuous_residual, residual_ceiling
from .adjoint import DualConfig, solve_dual, dual_propagator, stability_factors
from .estimator import (
    assemble_bounds,
    error_representation,
    estimate_quadrature_error,
    solver_quadrature_basis,
    predict_computability,
    predict_optimal_dt,
)

__version__ = "0.1.0"

__all__ = [
    "PrecisionContext", "make_context", "Partition", "gauss_rule", "lagrange_basis",
    "lorenz", "van_der_pol", "linear_test", "scalar_decay",
    "SolverConfig", "solve_cg", "NonConvergence",
    "discrete_residual", "continuous_residual", "residual_ceiling",
    "DualConfig", "solve_dual", "dual_propagator", "stability_factors",
    "assemble_bounds", "error_representation", "estimate_quadrature_error", "solver_quadrature_basis",
    "predict_computability", "predict_optimal_dt",
]
