from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from sbdp_plus.core.kkt import lagrangian_block_gradient
from sbdp_plus.core.problem import AgentProblem, AgentSlice
from sbdp_plus.engine.updates import (
    correction_matrix_S,
    mixing_matrix,
    update_plus,
    update_plus_sosc,
    update_sbdp_baseline,
)
from sbdp_plus.errors import DimensionError, GraphError, LocalSolverError
from sbdp_plus.logging import get_agent_logger, get_logger_loguru
from sbdp_plus.models import EngineConfig, Variant
from sbdp_plus.netsim.network import Message, MessageKind
from sbdp_plus.solvers.local_nlp import LocalNlp, LocalSolution, solve_local_nlp

logger = get_logger_loguru(__name__, "engine.log")


class Agent:
    """
    State and work of one agent. Everything it knows about other agents
    arrives as delivered messages; neighbor oracles are used only in
    neighbor-affine mode, where the problem declares that ∇_{x_i}L_j needs
    nothing beyond (x_i, x_j, λ_j, μ_j).
    """

    def __init__(
        self,
        problem: AgentProblem,
        part: AgentSlice,
        config: EngineConfig,
        mu_offset: int = 0,
        neighbor_oracles: Optional[Mapping[int, AgentProblem]] = None,
    ):
        self.problem = problem
        self.id = problem.agent_id
        self.part = part.copy()
        self.config = config
        self.mu_offset = mu_offset
        self.neighbor_oracles = dict(neighbor_oracles or {})

        self.x_neighbors: Dict[int, np.ndarray] = {}
        self.duals_neighbors: Dict[int, AgentSlice] = {}
        self.nlp: Optional[LocalNlp] = None
        self.solution: Optional[LocalSolution] = None
        self.logger = get_agent_logger(logger, self.id)

    @property
    def neighbors(self) -> Sequence[int]:
        return self.problem.neighbor_ids

    def local_z(self) -> np.ndarray:
        return self.problem.compose(self.part.x, self.x_neighbors)

    # --- sensitivities ---

    def sensitivity_messages(self) -> List[Message]:
        """Mirrored gradients ∇_{x_j}L_i, one message per neighbor j."""
        z = self.local_z()
        return [
            Message(self.id, j, MessageKind.SENSITIVITY,
                    lagrangian_block_gradient(self.problem, z, self.part.lam, self.part.mu, j))
            for j in self.neighbors
        ]

    def receive_sensitivities(self, messages: Sequence[Message]) -> Dict[int, np.ndarray]:
        return {m.sender: m.payload for m in messages if m.kind is MessageKind.SENSITIVITY}

    def local_sensitivities(self) -> Dict[int, np.ndarray]:
        """∇_{x_i}L_j for every neighbor j, evaluated from j's oracle and j's last broadcast."""
        sensitivities = {}
        for j in self.neighbors:
            oracle = self.neighbor_oracles[j]
            duals = self.duals_neighbors[j]
            around_j = {
                k: self.part.x if k == self.id else self.x_neighbors.get(k, np.zeros(n_k))
                for k, n_k in oracle.neighbor_dims.items()
            }
            z_j = oracle.compose(self.x_neighbors[j], around_j)
            sensitivities[j] = lagrangian_block_gradient(oracle, z_j, duals.lam, duals.mu, self.id)
        return sensitivities

    # --- local solve ---

    def solve(self, sensitivities: Mapping[int, np.ndarray], iteration: int) -> LocalSolution:
        self.nlp = LocalNlp.build(
            self.problem, self.part.x, self.x_neighbors, self.config.rho, sensitivities, self.mu_offset
        )
        try:
            self.solution = solve_local_nlp(self.nlp, warm_start=self.solution, tol=self.config.local_tol)
        except LocalSolverError as e:
            self.logger.debug(f"local solve failed at iteration {iteration}: {e}")
            raise e.at_iteration(iteration, self.id)
        return self.solution

    # --- SOSC corrections ---

    def correction_messages(self) -> List[Message]:
        """S_ji s_i for every neighbor j, computed here as the owner of the constraints."""
        return [
            Message(self.id, j, MessageKind.CORRECTION, correction_matrix_S(j, self.id, self.nlp, self.solution) @ self.solution.s)
            for j in self.neighbors
        ]

    def own_correction(self, partial: bool) -> np.ndarray:
        return correction_matrix_S(self.id, self.id, self.nlp, self.solution, partial=partial) @ self.solution.s

    # --- update ---

    def update(self, corrections: Optional[Mapping[int, np.ndarray]] = None) -> AgentSlice:
        """Apply the variant's update rule to the own slice p_i."""
        config, y = self.config, self.solution
        variant = config.variant
        if variant is Variant.SBDP_BASELINE:
            self.part = update_sbdp_baseline(self.part, y)
        elif variant is Variant.SBDP_BASELINE_DAMPED:
            self.part = update_sbdp_baseline(self.part, y, config.alpha)
        elif variant is Variant.SBDP_PLUS_IDENTITY:
            self.part = update_plus(self.part, y, np.eye(self.problem.p_dim), config.alpha)
        else:
            P = mixing_matrix(self.nlp, y, config.beta)
            if variant.uses_correction:
                required = [self.id, *self.neighbors] if variant.exchanges_corrections else [self.id]
                self.part = update_plus_sosc(
                    self.part, y, P, corrections or {}, config.alpha, config.gamma, required
                )
            else:
                self.part = update_plus(self.part, y, P, config.alpha)
        return self.part

    # --- decisions ---

    def decision_messages(self, with_duals: bool = False) -> List[Message]:
        payload = self.part.vector if with_duals else self.part.x
        return [Message(self.id, j, MessageKind.DECISION, payload.copy()) for j in self.neighbors]

    def receive_decisions(self, messages: Sequence[Message], with_duals: bool = False) -> None:
        for message in messages:
            if message.kind is not MessageKind.DECISION:
                continue
            j = message.sender
            if j not in self.problem.neighbor_dims:
                raise GraphError(f"agent {self.id} received a decision from non-neighbor {j}")
            n_j = self.problem.neighbor_dims[j]
            if with_duals:
                oracle = self.neighbor_oracles[j]
                if message.payload.shape != (oracle.p_dim,):
                    raise DimensionError(f"decision from {j} has {message.payload.shape[0]} entries, expected {oracle.p_dim}")
                self.duals_neighbors[j] = AgentSlice.from_vector(message.payload, n_j, oracle.n_g)
            self.x_neighbors[j] = message.payload[:n_j].copy()
