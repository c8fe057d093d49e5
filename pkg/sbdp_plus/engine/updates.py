"""Mixing and correction matrices and the per-agent primal-dual update rules."""

from typing import Iterable, Mapping, Optional

import numpy as np

from sbdp_plus.core.problem import AgentSlice
from sbdp_plus.errors import ConfigurationError, DimensionError, GraphError
from sbdp_plus.solvers.local_nlp import LocalNlp, LocalSolution


def offset(part: AgentSlice) -> np.ndarray:
    """d_i(p_i) = [0, λ_i, μ_i]."""
    return np.concatenate([np.zeros_like(part.x), part.lam, part.mu])


def mixing_matrix(nlp: LocalNlp, y: LocalSolution, beta: float) -> np.ndarray:
    """
    P_i(y_i) of size n_i + n_gi + n_hi:

        [ ∇²_ss L̄_i     ∇ḡ_iᵀ   ∇h̄_iᵀ  ]
        [ -β ∇ḡ_i        0       0      ]
        [ -β K_i ∇h̄_i   0      -β H̄_i  ]

    with K_i = diag(κ_i) and H̄_i = diag(h̄_i(s_i)) from the current solve.
    The top-left block carries the proximal term ρI.
    """
    if not beta > 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    values = nlp.values(y.s)
    n, n_g, n_h = nlp.n, nlp.n_g, nlp.n_h
    P = np.zeros((n + n_g + n_h, n + n_g + n_h))
    xs, gs, hs = slice(0, n), slice(n, n + n_g), slice(n + n_g, n + n_g + n_h)
    P[xs, xs] = nlp.hessian(y.s, y.nu, y.kappa)
    P[xs, gs] = values.jac_g.T
    P[xs, hs] = values.jac_h.T
    P[gs, xs] = -beta * values.jac_g
    P[hs, xs] = -beta * y.kappa[:, None] * values.jac_h
    P[hs, hs] = -beta * np.diag(values.h)
    return P


def correction_matrix_S(i: int, j: int, nlp_j: LocalNlp, y_j: LocalSolution, partial: bool = False) -> np.ndarray:
    """
    S_ij = ∇_{s_i}ḡ_jᵀ ∇_{s_j}ḡ_j + ∇_{s_i}h̄_jᵀ K_j² ∇_{s_j}h̄_j at y_j, computed by agent j.

    With ``partial`` only the rows of agent j that depend on x_j alone enter.

    Raises:
        GraphError: i is neither j nor a neighbor of j
    """
    agent = nlp_j.agent
    if j != agent.agent_id:
        raise GraphError(f"local NLP belongs to agent {agent.agent_id}, not {j}")
    if i not in agent.blocks:
        raise GraphError(f"agent {i} is not in the closed neighborhood of agent {j}")
    oracle = nlp_j.oracle(y_j.s)
    rows_g = agent.decoupled_eq if partial else np.arange(agent.n_g)
    rows_h = agent.decoupled_ineq if partial else np.arange(agent.n_h)
    cols_i, cols_j = agent.blocks[i], agent.blocks[j]

    jac_g, jac_h = oracle.jac_g[rows_g], oracle.jac_h[rows_h]
    weights = y_j.kappa[rows_h] ** 2
    return jac_g[:, cols_i].T @ jac_g[:, cols_j] + jac_h[:, cols_i].T @ (weights[:, None] * jac_h[:, cols_j])


def _check(part: AgentSlice, y: LocalSolution, P: np.ndarray) -> None:
    p_i = part.vector.shape[0]
    if y.vector.shape[0] != p_i or P.shape != (p_i, p_i):
        raise DimensionError(
            f"update dimensions disagree: p_i={p_i}, y_i={y.vector.shape[0]}, P_i={P.shape}"
        )


def update_plus(part: AgentSlice, y: LocalSolution, P: np.ndarray, alpha: float) -> AgentSlice:
    """p_i' = p_i + α P_i (y_i - d_i(p_i))."""
    _check(part, y, P)
    updated = part.vector + alpha * (P @ (y.vector - offset(part)))
    return AgentSlice.from_vector(updated, part.x.shape[0], part.lam.shape[0])


def update_plus_sosc(
    part: AgentSlice,
    y: LocalSolution,
    P: np.ndarray,
    corrections: Mapping[int, np.ndarray],
    alpha: float,
    gamma: float,
    required: Iterable[int],
) -> AgentSlice:
    """
    p_i' = p_i + α [P_i (y_i - d_i(p_i)) + γ Σ_j [S_ij s_j; 0; 0]].

    Args:
        corrections: j -> S_ij s_j, one entry per id in ``required``
        required: N_i ∪ {i} for the full variant, {i} for the partial one

    Raises:
        GraphError: a required correction payload is missing
    """
    _check(part, y, P)
    missing = set(required) - set(corrections)
    if missing:
        raise GraphError(f"missing correction payloads from {sorted(missing)}")
    n = part.x.shape[0]
    correction = np.zeros(part.vector.shape[0])
    for j in sorted(corrections):
        payload = np.asarray(corrections[j], dtype=float)
        if payload.shape != (n,):
            raise DimensionError(f"correction from {j} has shape {payload.shape}, expected ({n},)")
        correction[:n] += payload
    updated = part.vector + alpha * (P @ (y.vector - offset(part)) + gamma * correction)
    return AgentSlice.from_vector(updated, n, part.lam.shape[0])


def update_sbdp_baseline(part: AgentSlice, y: LocalSolution, alpha: Optional[float] = None) -> AgentSlice:
    """
    Newton-like update x' = x + s, λ' = ν, μ' = κ; with ``alpha`` the damped
    form p' = p + α (y - d(p)).
    """
    if alpha is None:
        return AgentSlice(part.x + y.s, y.nu.copy(), y.kappa.copy())
    identity = np.eye(part.vector.shape[0])
    return update_plus(part, y, identity, alpha)
