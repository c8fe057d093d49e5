import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.engine.agent import Agent
from sbdp_plus.engine.stopping import aggregate_flags, local_flag
from sbdp_plus.errors import ConfigurationError, DimensionError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.mixins.agent_pool_mixin import AgentPoolMixin, PoolConfig
from sbdp_plus.models import BudgetCheck, EngineConfig, RunStatus, Variant
from sbdp_plus.monitoring.iteration_monitor import IterationContext
from sbdp_plus.netsim.network import NetworkSim, budget_check
from sbdp_plus.settings import settings
from sbdp_plus.solvers.local_nlp import LocalSolution

logger = get_logger_loguru(__name__, "engine.log")

SETUP_ITERATION = -1


@dataclass
class IterationRecord:
    q: int
    point: PrimalDualPoint
    local_solutions: Dict[int, LocalSolution]
    s_inf: float
    comm_floats: int
    wall_ms: float
    budget: Optional[BudgetCheck] = None


@dataclass
class IterationTrace:
    """Iterates p^1, p^2, ... of one run with the terminal status."""

    problem_name: str
    config: EngineConfig
    p0: PrimalDualPoint
    records: List[IterationRecord] = field(default_factory=list)
    status: RunStatus = "max_iter"
    network: Optional[NetworkSim] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_point(self) -> PrimalDualPoint:
        return self.records[-1].point if self.records else self.p0

    def points(self) -> List[PrimalDualPoint]:
        """p^0 followed by every recorded iterate."""
        return [self.p0] + [record.point for record in self.records]


class SbdpEngine(AgentPoolMixin[Mapping[int, np.ndarray], LocalSolution]):
    """
    Synchronous distributed iteration. One iteration, per agent i:

      1. compute ∇_{x_j}L_i for every neighbor (skipped in neighbor-affine mode)
      2. exchange the sensitivities
      3. solve the local NLP (the parallel phase)
      4. exchange S_ji s_i (full SOSC variant only)
      5. update p_i
      6. exchange x_i (with λ_i, μ_i in neighbor-affine mode)
      7. stop once every ‖s_i‖∞ ≤ ε, decided by flag flooding
    """

    def __init__(self, problem: ProblemGraph, config: EngineConfig, network: Optional[NetworkSim] = None):
        super().__init__("local solves", PoolConfig(max_workers=config.max_workers))
        self.problem = problem
        self.config = config
        self.network = network or NetworkSim(problem)
        self.agents: Dict[int, Agent] = {}
        self._iteration = 0
        self._check_config()

    def _check_config(self) -> None:
        config, problem = self.config, self.problem
        if config.variant is Variant.SBDP_PLUS_IDENTITY:
            coupled = [
                i for i, a in problem.agents.items()
                if len(a.decoupled_eq) < a.n_g or len(a.decoupled_ineq) < a.n_h
            ]
            if coupled:
                raise ConfigurationError(
                    f"identity mixing needs decoupled constraints; agents {coupled} have coupled rows"
                )
        if config.neighbor_affine:
            missing = [i for i, a in problem.agents.items() if not a.neighbor_affine]
            if missing:
                raise ConfigurationError(f"neighbor-affine mode requested but agents {missing} are not neighbor-affine")
        if config.variant.uses_correction and config.gamma == 0:
            logger.debug("SOSC variant with gamma = 0 reduces to the plain update")

    def process_agent(self, agent_id: int, item: Mapping[int, np.ndarray]) -> LocalSolution:
        return self.agents[agent_id].solve(item, self._iteration)

    # --- phases ---

    def _setup(self, p0: PrimalDualPoint) -> None:
        problem, affine = self.problem, self.config.neighbor_affine
        self.agents = {
            i: Agent(
                problem.agent(i),
                p0.agent(i),
                self.config,
                mu_offset=problem.layout.mu[i].start,
                neighbor_oracles={j: problem.agent(j) for j in problem.neighbors(i)} if affine else None,
            )
            for i in problem.ids
        }
        self.network.begin_iteration(SETUP_ITERATION)
        self._exchange_decisions()

    def _exchange_decisions(self) -> None:
        affine = self.config.neighbor_affine
        messages = [m for agent in self.agents.values() for m in agent.decision_messages(with_duals=affine)]
        delivery = self.network.exchange(messages)
        for i, agent in self.agents.items():
            agent.receive_decisions(delivery.get(i, []), with_duals=affine)

    def _sensitivities(self) -> Dict[int, Dict[int, np.ndarray]]:
        if self.config.neighbor_affine:
            return {i: agent.local_sensitivities() for i, agent in self.agents.items()}
        messages = [m for agent in self.agents.values() for m in agent.sensitivity_messages()]
        delivery = self.network.exchange(messages)
        return {i: agent.receive_sensitivities(delivery.get(i, [])) for i, agent in self.agents.items()}

    def _corrections(self) -> Dict[int, Dict[int, np.ndarray]]:
        variant = self.config.variant
        if not variant.uses_correction:
            return {}
        partial = not variant.exchanges_corrections
        corrections = {i: {i: agent.own_correction(partial)} for i, agent in self.agents.items()}
        if partial:
            return corrections
        messages = [m for agent in self.agents.values() for m in agent.correction_messages()]
        delivery = self.network.exchange(messages)
        for i in self.agents:
            for message in delivery.get(i, []):
                corrections[i][message.sender] = message.payload
        return corrections

    def _point(self) -> PrimalDualPoint:
        return PrimalDualPoint.from_slices({i: a.part for i, a in self.agents.items()}, self.problem.layout)

    # --- main loop ---

    def run(self, p0: PrimalDualPoint) -> IterationTrace:
        """
        Run from p0 until the stopping rule, the iteration cap or divergence.

        Raises:
            DimensionError: p0 does not match the problem
            LocalSolverError: a local solve failed, tagged with iteration and agent
        """
        problem, config = self.problem, self.config
        if p0.layout.p != problem.p or p0.layout.n != problem.n or p0.layout.n_g != problem.n_g:
            raise DimensionError(f"p0 of size {p0.layout.p} does not match {problem.name} (p={problem.p})")

        trace = IterationTrace(problem.name, config, p0.copy(), network=self.network)
        self._setup(p0)
        warned_mu = False
        logger.info("=" * 60)
        logger.info(f"Running {config.variant.value} on {problem.name}")
        logger.info(f"  agents={len(problem.ids)}  n={problem.n}  n_g={problem.n_g}  n_h={problem.n_h}")
        logger.info(
            f"  alpha={config.alpha:.4g}  beta={config.beta:.4g}  rho={config.rho:.4g}  "
            f"gamma={config.gamma:.4g}  eps={config.epsilon:.3g}  max_iter={config.max_iter}"
        )
        logger.info("=" * 60)

        with IterationContext(f"{problem.name}/{config.variant.value}") as monitor:
            for q in range(config.max_iter):
                started = time.perf_counter()
                self._iteration = q
                self.network.begin_iteration(q)

                sensitivities = self._sensitivities()
                solutions = self.map_agents(sensitivities)
                corrections = self._corrections()
                for i, agent in self.agents.items():
                    agent.update(corrections.get(i))
                self._exchange_decisions()

                flags = {i: local_flag(y.s, config.epsilon) for i, y in solutions.items()}
                decisions = aggregate_flags(self.network, problem, flags)

                point = self._point()
                s_inf = max(y.s_inf for y in solutions.values())
                floats = self.network.ledger.floats(q)
                trace.records.append(IterationRecord(
                    q=q,
                    point=point,
                    local_solutions=solutions,
                    s_inf=s_inf,
                    comm_floats=floats,
                    wall_ms=(time.perf_counter() - started) * 1e3,
                    budget=budget_check(self.network.ledger, problem, config.variant, config.neighbor_affine, q),
                ))
                monitor.update_activity(floats=floats, solver_iterations=sum(y.solver_iterations for y in solutions.values()), step_norm=s_inf)

                size = np.max(np.abs(point.vector)) if point.vector.size else 0.0
                if not np.isfinite(size) or size > config.divergence_threshold:
                    logger.warning(f"{problem.name}: iterate left |p| <= {config.divergence_threshold:.1e} at iteration {q}")
                    trace.status = "diverged"
                    break
                if not warned_mu and problem.n_h and np.min(point.mu) < settings.MU_WARNING_LEVEL:
                    logger.warning(f"{problem.name}: min(mu) = {np.min(point.mu):.3e} at iteration {q}")
                    warned_mu = True
                if all(decisions.values()):
                    trace.status = "converged"
                    break

        logger.info(f"{problem.name}: {trace.status} after {trace.iterations} iterations")
        return trace


def run(
    problem: ProblemGraph,
    config: EngineConfig,
    p0: Optional[PrimalDualPoint] = None,
    network: Optional[NetworkSim] = None,
) -> IterationTrace:
    """
    Execute the distributed iteration.

    Args:
        problem: graph-structured NLP
        config: step sizes, penalties, variant and stopping rule
        p0: initial primal-dual point, zeros by default
        network: simulated network, a fresh one by default

    Returns:
        IterationTrace: iterates, per-iteration diagnostics and terminal status
    """
    p0 = problem.zeros() if p0 is None else p0
    return SbdpEngine(problem, config, network).run(p0)
