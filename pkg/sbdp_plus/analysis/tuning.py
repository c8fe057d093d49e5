from typing import Mapping, Optional

import numpy as np

from sbdp_plus.analysis.matrices import decoupled_rows, eigenvalues
from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.errors import AnalysisError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings
from sbdp_plus.solvers.local_nlp import LocalSolution

logger = get_logger_loguru(__name__)

RHO_MARGIN = 1e-8
DENOMINATOR_FLOOR = 1e-14


def max_step_size(A: np.ndarray) -> float:
    """
    Largest admissible step: min over eigenvalues λ of A of 2Re(λ)/|λ|², capped at 1.

    Returns 0.0 when an eigenvalue has Re(λ) ≤ 0; then no α > 0 makes I - αA
    Schur stable and the iteration diverges.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise AnalysisError(f"A must be square, got shape {A.shape}")
    if A.size == 0:
        return 1.0
    values = eigenvalues(A)
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.any(values.real <= 1e-12 * scale):
        worst = values[np.argmin(values.real)]
        logger.warning(f"A has an eigenvalue with non-positive real part ({worst:.6g}); no step size converges")
        return 0.0
    bounds = 2.0 * values.real / np.abs(values) ** 2
    return float(min(1.0, np.min(bounds)))


def _evaluation_point(problem: ProblemGraph, point: PrimalDualPoint, local_solutions):
    if local_solutions is None:
        return point.x, point.lam, point.mu
    x_bar = point.x.copy()
    nu, kappa = np.zeros(problem.n_g), np.zeros(problem.n_h)
    for i in problem.ids:
        y = local_solutions[i]
        x_bar[problem.layout.x[i]] += y.s
        nu[problem.layout.lam[i]] = y.nu
        kappa[problem.layout.mu[i]] = y.kappa
    return x_bar, nu, kappa


def tune_beta(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    local_solutions: Optional[Mapping[int, LocalSolution]] = None,
    gamma: float = 0.0,
) -> float:
    """
    β = λ_min(∇²L(x̄, ν, κ) + γR) / λ_max(Jᵀ K̄ J) with x̄ = x + s,
    J = [J_g; J_h] and K̄ = diag(1, κ).

    Without local solutions the point itself is used (x̄ = x, ν = λ, κ = μ).
    Falls back to the configured default when the denominator vanishes or
    the numerator is not positive.
    """
    x_bar, nu, kappa = _evaluation_point(problem, point, local_solutions)
    derivatives = problem.central_derivatives(x_bar, nu, kappa)
    hessian = derivatives.hess_l
    if gamma > 0:
        hessian = hessian + gamma * (
            derivatives.jac_g.T @ derivatives.jac_g + derivatives.jac_h.T @ ((kappa ** 2)[:, None] * derivatives.jac_h)
        )
    jac = np.vstack([derivatives.jac_g, derivatives.jac_h])
    weights = np.concatenate([np.ones(problem.n_g), kappa])
    curvature = jac.T @ (weights[:, None] * jac)

    denominator = float(np.linalg.eigvalsh(curvature)[-1]) if curvature.size else 0.0
    numerator = float(np.linalg.eigvalsh(hessian)[0]) if hessian.size else 0.0
    if denominator <= DENOMINATOR_FLOOR:
        logger.warning(f"{problem.name}: no active constraint curvature, using default beta={settings.DEFAULT_BETA}")
        return settings.DEFAULT_BETA
    if numerator <= 0:
        logger.warning(
            f"{problem.name}: Lagrangian Hessian not positive definite (λ_min={numerator:.3e}), "
            f"using default beta={settings.DEFAULT_BETA}"
        )
        return settings.DEFAULT_BETA
    return numerator / denominator


def min_rho(problem: ProblemGraph, point: PrimalDualPoint) -> float:
    """Smallest ρ ≥ 0 with ∇²_{x_i x_i}L_i + ρI ≻ 0 for every agent."""
    smallest = np.inf
    for i, agent in problem.agents.items():
        part = point.agent(i)
        oracle = agent.evaluate(problem.local_vector(i, point.x))
        own = agent.own
        block = oracle.lagrangian_hessian(part.lam, part.mu)[own, own]
        if block.size:
            smallest = min(smallest, float(np.linalg.eigvalsh(0.5 * (block + block.T))[0]))
    return 0.0 if smallest > 0 else -smallest + RHO_MARGIN


def _smallest_penalized(hessian: np.ndarray, R: np.ndarray, gamma: float) -> float:
    if hessian.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(hessian + gamma * R)[0])


def min_gamma(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    partial: bool = False,
    upper: Optional[float] = None,
    tol: Optional[float] = None,
) -> float:
    """
    Smallest γ (to ``tol``) with ∇²L + γJᵀŪ²J ≻ 0, found by bisection on [0, upper].
    With ``partial`` only decoupled constraint rows enter J.

    Raises:
        AnalysisError: no γ ≤ upper makes the matrix positive definite
    """
    upper = settings.GAMMA_SEARCH_MAX if upper is None else upper
    tol = settings.GAMMA_SEARCH_TOL if tol is None else tol
    derivatives = problem.central_derivatives(point.x, point.lam, point.mu)
    jac_g, jac_h, mu = derivatives.jac_g, derivatives.jac_h, point.mu
    if partial:
        rows_g, rows_h = decoupled_rows(problem)
        jac_g, jac_h, mu = jac_g[rows_g], jac_h[rows_h], mu[rows_h]
    R = jac_g.T @ jac_g + jac_h.T @ ((mu ** 2)[:, None] * jac_h)
    hessian = derivatives.hess_l

    if _smallest_penalized(hessian, R, 0.0) > 0:
        return 0.0
    if _smallest_penalized(hessian, R, upper) <= 0:
        raise AnalysisError(f"{problem.name}: no penalty up to gamma={upper:g} makes the Hessian positive definite")
    low, high = 0.0, upper
    while high - low > tol:
        middle = 0.5 * (low + high)
        if _smallest_penalized(hessian, R, middle) > 0:
            high = middle
        else:
            low = middle
    return high
