"""Linearization at a KKT point, step-size tuning, Lyapunov rates and certificates."""

from .certify import certify, certify_basin, check_assumptions, grad_phi_check
from .lyapunov import convergence_constants, solve_discrete_lyapunov
from .matrices import assemble_A, assemble_M_N_D, gdd_metric, iteration_matrix
from .tuning import max_step_size, min_gamma, min_rho, tune_beta

__all__ = [
    "certify",
    "certify_basin",
    "check_assumptions",
    "grad_phi_check",
    "convergence_constants",
    "solve_discrete_lyapunov",
    "assemble_A",
    "assemble_M_N_D",
    "gdd_metric",
    "iteration_matrix",
    "max_step_size",
    "min_gamma",
    "min_rho",
    "tune_beta",
]
