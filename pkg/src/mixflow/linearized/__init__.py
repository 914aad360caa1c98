"""Linear system with frozen coefficients and its nonlinear right-hand sides."""
from .coefficients import FrozenCoefficients, freeze_coefficients
from .rhs import LevelEvaluator, assemble_rhs, divergence_coefficient_shift, relaxation_shift
from .solver import (
    BC_FORMS,
    LinearSolver,
    RHSBundle,
    Trajectory,
    boundary_flux_residual,
    discrete_energy,
    solve_linear_step,
)

__all__ = [
    "BC_FORMS",
    "FrozenCoefficients",
    "LevelEvaluator",
    "LinearSolver",
    "RHSBundle",
    "Trajectory",
    "assemble_rhs",
    "boundary_flux_residual",
    "discrete_energy",
    "divergence_coefficient_shift",
    "freeze_coefficients",
    "relaxation_shift",
    "solve_linear_step",
]
