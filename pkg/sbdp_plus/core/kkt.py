"""Lagrangians, mirrored sensitivity gradients and the central KKT residual."""

from typing import Dict

import numpy as np

from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.errors import DimensionError, GraphError
from sbdp_plus.utils import max_norm


def _check_point(problem: ProblemGraph, point: PrimalDualPoint) -> None:
    if point.layout.p != problem.p or point.layout.n != problem.n:
        raise DimensionError(
            f"point of size {point.layout.p} does not match {problem.name} (p={problem.p})"
        )


def central_lagrangian(problem: ProblemGraph, point: PrimalDualPoint) -> float:
    """L(x, λ, μ) = Σ f_i + λᵀg(x) + μᵀh(x), assembled from the central vectors."""
    _check_point(problem, point)
    x = point.x
    return float(problem.objective(x) + point.lam @ problem.eq(x) + point.mu @ problem.ineq(x))


def local_lagrangians(problem: ProblemGraph, point: PrimalDualPoint) -> Dict[int, float]:
    """L_i(x_i, λ_i, μ_i, x_{N_i}) for every agent."""
    _check_point(problem, point)
    values = {}
    for i, agent in problem.agents.items():
        part = point.agent(i)
        values[i] = agent.lagrangian(problem.local_vector(i, point.x), part.lam, part.mu)
    return values


def neighbor_lagrangian_gradient(
    problem: ProblemGraph, i: int, j: int, point: PrimalDualPoint
) -> np.ndarray:
    """
    Mirrored sensitivity ∇_{x_j} L_i, computed by agent i for its neighbor j.

    Only agent i's data enters: (x_i, λ_i, μ_i) and x_{N_i}.

    Args:
        problem: the graph-structured NLP
        i: agent whose Lagrangian is differentiated
        j: neighbor w.r.t. whose variables the gradient is taken
        point: current primal-dual point

    Returns:
        np.ndarray: gradient of length n_j
    """
    _check_point(problem, point)
    agent = problem.agent(i)
    if j not in agent.neighbor_dims:
        raise GraphError(f"agent {j} is not a neighbor of agent {i}")
    part = point.agent(i)
    z = problem.local_vector(i, point.x)
    return lagrangian_block_gradient(agent, z, part.lam, part.mu, j)


def lagrangian_block_gradient(agent, z: np.ndarray, lam: np.ndarray, mu: np.ndarray, block: int) -> np.ndarray:
    """∇ of L_i w.r.t. one block of its local vector, from the agent's own oracles."""
    cols = agent.blocks[block]
    grad = np.asarray(agent.objective_gradient(z), dtype=float)[cols]
    if agent.n_g:
        grad = grad + np.asarray(agent.eq_jacobian(z), dtype=float)[:, cols].T @ lam
    if agent.n_h:
        grad = grad + np.asarray(agent.ineq_jacobian(z), dtype=float)[:, cols].T @ mu
    expected = agent.n if block == agent.agent_id else agent.neighbor_dims[block]
    if grad.shape != (expected,):
        raise DimensionError(f"agent {agent.agent_id}: gradient block {block} has shape {grad.shape}")
    return grad


def kkt_parts(problem: ProblemGraph, point: PrimalDualPoint) -> Dict[str, float]:
    """Max-norms of the separate KKT conditions at a point."""
    _check_point(problem, point)
    derivatives = problem.central_derivatives(point.x, point.lam, point.mu)
    h = derivatives.h
    return {
        "stationarity": max_norm(derivatives.lagrangian_gradient(point.lam, point.mu)),
        "equality": max_norm(derivatives.g),
        "inequality": max_norm(np.minimum(-h, 0.0)),
        "dual_sign": max_norm(np.minimum(point.mu, 0.0)),
        "complementarity": max_norm(point.mu * h),
    }


def central_kkt_residual(problem: ProblemGraph, point: PrimalDualPoint) -> float:
    """
    Max-norm KKT residual of the central NLP: stationarity of L, ‖g(x)‖,
    violation of h(x) ≤ 0, negative parts of μ and μ∘h(x).
    """
    return max(kkt_parts(problem, point).values())
