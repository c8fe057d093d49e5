"""Linearization matrices of the distributed iteration at a primal-dual point.

Global ordering is p = (x, λ, μ) with agents stacked in id order inside each
group; the local solution vectors y are ordered (s, ν, κ) the same way.
"""

from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
import scipy.linalg

from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.errors import AnalysisError
from sbdp_plus.models import EngineConfig, Variant
from sbdp_plus.solvers.local_nlp import LocalSolution

SINGULAR_CONDITION = 1e14


@dataclass
class AnalysisMatrices:
    A: np.ndarray
    M: np.ndarray
    N: np.ndarray
    D: np.ndarray
    R: np.ndarray


def _blocks(problem: ProblemGraph) -> Tuple[slice, slice, slice]:
    n, n_g, n_h = problem.n, problem.n_g, problem.n_h
    return slice(0, n), slice(n, n + n_g), slice(n + n_g, n + n_g + n_h)


def _dual_scaling(problem: ProblemGraph, beta: float) -> np.ndarray:
    return np.concatenate([np.ones(problem.n), -beta * np.ones(problem.n_g + problem.n_h)])


def decoupled_rows(problem: ProblemGraph) -> Tuple[np.ndarray, np.ndarray]:
    """Global λ and μ indices of the constraint rows that depend on the owner's x only."""
    eq = [problem.layout.lam[i].start + k for i, a in problem.agents.items() for k in a.decoupled_eq]
    ineq = [problem.layout.mu[i].start + k for i, a in problem.agents.items() for k in a.decoupled_ineq]
    return np.array(eq, dtype=int), np.array(ineq, dtype=int)


def penalty_matrix_R(problem: ProblemGraph, point: PrimalDualPoint, partial: bool = False) -> np.ndarray:
    """R(p) = J_gᵀJ_g + J_hᵀU²J_h, over decoupled rows only when ``partial``."""
    derivatives = problem.central_derivatives(point.x, point.lam, point.mu)
    jac_g, jac_h, mu = derivatives.jac_g, derivatives.jac_h, point.mu
    if partial:
        rows_g, rows_h = decoupled_rows(problem)
        jac_g, jac_h, mu = jac_g[rows_g], jac_h[rows_h], mu[rows_h]
    return jac_g.T @ jac_g + jac_h.T @ ((mu ** 2)[:, None] * jac_h)


def assemble_N(problem: ProblemGraph, point: PrimalDualPoint) -> np.ndarray:
    """Central linearization [[∇²L, J_gᵀ, J_hᵀ], [J_g, 0, 0], [U J_h, 0, H]]."""
    derivatives = problem.central_derivatives(point.x, point.lam, point.mu)
    xs, gs, hs = _blocks(problem)
    N = np.zeros((problem.p, problem.p))
    N[xs, xs] = derivatives.hess_l
    N[xs, gs] = derivatives.jac_g.T
    N[xs, hs] = derivatives.jac_h.T
    N[gs, xs] = derivatives.jac_g
    N[hs, xs] = point.mu[:, None] * derivatives.jac_h
    N[hs, hs] = np.diag(derivatives.h)
    return N


def assemble_A(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    beta: float,
    gamma: float = 0.0,
    variant: Variant = Variant.SBDP_PLUS,
) -> np.ndarray:
    """
    A(p) = blkdiag(I, -βI, -βI)·N(p) + γ blkdiag(R(p), 0, 0).

    The γR term enters for the SOSC variants; the partial variant builds R from
    the decoupled constraint rows.
    """
    A = _dual_scaling(problem, beta)[:, None] * assemble_N(problem, point)
    if variant.uses_correction and gamma > 0:
        xs = _blocks(problem)[0]
        A[xs, xs] += gamma * penalty_matrix_R(problem, point, partial=variant is Variant.SBDP_PLUS_PARTIAL_SOSC)
    return A


def assemble_M_N_D(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    rho: float,
    local_solutions: Optional[Mapping[int, LocalSolution]] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Block-diagonal local linearization M, central linearization N and the
    offset Jacobian D = blkdiag(0, I, I).

    Without local solutions y = d(p) is used, which is exact at a KKT point.

    Raises:
        AnalysisError: M is singular
    """
    xs, gs, hs = _blocks(problem)
    layout = problem.layout
    M = np.zeros((problem.p, problem.p))
    for i, agent in problem.agents.items():
        part = point.agent(i)
        if local_solutions is not None:
            y = local_solutions[i]
            s, nu, kappa = y.s, y.nu, y.kappa
        else:
            s, nu, kappa = np.zeros(agent.n), part.lam, part.mu
        x_bar = point.x.copy()
        x_bar[layout.x[i]] += s
        oracle = agent.evaluate(problem.local_vector(i, x_bar))
        own = agent.own
        hess = oracle.lagrangian_hessian(nu, kappa)[own, own] + rho * np.eye(agent.n)
        jac_g, jac_h = oracle.jac_g[:, own], oracle.jac_h[:, own]

        xi = np.arange(layout.x[i].start, layout.x[i].stop)
        gi = problem.n + np.arange(layout.lam[i].start, layout.lam[i].stop)
        hi = problem.n + problem.n_g + np.arange(layout.mu[i].start, layout.mu[i].stop)
        M[np.ix_(xi, xi)] = hess
        M[np.ix_(xi, gi)] = jac_g.T
        M[np.ix_(gi, xi)] = jac_g
        M[np.ix_(xi, hi)] = jac_h.T
        M[np.ix_(hi, xi)] = kappa[:, None] * jac_h
        M[np.ix_(hi, hi)] = np.diag(oracle.h)

    condition = np.linalg.cond(M) if M.size else 1.0
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise AnalysisError(f"{problem.name}: M is singular (condition number {condition:.3e}); the point is not regular")

    D = np.zeros((problem.p, problem.p))
    D[gs, gs] = np.eye(problem.n_g)
    D[hs, hs] = np.eye(problem.n_h)
    return M, assemble_N(problem, point), D


def analysis_matrices(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    config: EngineConfig,
    local_solutions: Optional[Mapping[int, LocalSolution]] = None,
) -> AnalysisMatrices:
    M, N, D = assemble_M_N_D(problem, point, config.rho, local_solutions)
    partial = config.variant is Variant.SBDP_PLUS_PARTIAL_SOSC
    return AnalysisMatrices(
        A=assemble_A(problem, point, config.beta, config.gamma, config.variant),
        M=M,
        N=N,
        D=D,
        R=penalty_matrix_R(problem, point, partial=partial),
    )


def gdd_metric(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    rho: float,
    local_solutions: Optional[Mapping[int, LocalSolution]] = None,
) -> Tuple[float, float]:
    """
    Norm and spectral radius of I - M⁻¹N. Below one the plain baseline
    already converges locally and is the cheaper choice.
    """
    M, N, _ = assemble_M_N_D(problem, point, rho, local_solutions)
    G = np.eye(problem.p) - scipy.linalg.solve(M, N)
    return float(np.linalg.norm(G, 2)), spectral_radius(G)


def grad_phi_closed_form(M: np.ndarray, N: np.ndarray, D: np.ndarray) -> np.ndarray:
    """∇Φ = -M⁻¹(N - MD), the Jacobian of the local-solution map."""
    return -scipy.linalg.solve(M, N - M @ D)


def iteration_matrix(
    problem: ProblemGraph,
    point: PrimalDualPoint,
    config: EngineConfig,
    local_solutions: Optional[Mapping[int, LocalSolution]] = None,
) -> np.ndarray:
    """
    Linearized iteration map of the configured variant:

      SBDP+ family             I - αA
      identity mixing          I - αM⁻¹N
      baseline                 I - M⁻¹N
      damped baseline          I - αM⁻¹N
    """
    identity = np.eye(problem.p)
    variant = config.variant
    if variant.uses_mixing:
        return identity - config.alpha * assemble_A(problem, point, config.beta, config.gamma, variant)
    M, N, _ = assemble_M_N_D(problem, point, config.rho, local_solutions)
    step = 1.0 if variant is Variant.SBDP_BASELINE else config.alpha
    return identity - step * scipy.linalg.solve(M, N)


def eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a general real matrix through LAPACK."""
    try:
        return scipy.linalg.eigvals(matrix)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise AnalysisError(f"eigenvalue computation failed: {e}") from e


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(eigenvalues(matrix))))


def is_schur_stable(matrix: np.ndarray) -> bool:
    """All eigenvalues strictly inside the unit disk."""
    return spectral_radius(matrix) < 1.0
