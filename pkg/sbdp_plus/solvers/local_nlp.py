from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

import numpy as np

from sbdp_plus.core.kkt import neighbor_lagrangian_gradient
from sbdp_plus.core.problem import AgentProblem, OracleValues, PrimalDualPoint, ProblemGraph
from sbdp_plus.errors import DimensionError, GraphError, LocalSolverError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings
from sbdp_plus.solvers.ipm import InteriorPointSolver, IpmOptions, IpmResult, NlpValues, kkt_residual
from sbdp_plus.utils import as_vector

logger = get_logger_loguru(__name__)


@dataclass
class LocalSolution:
    """Local primal-dual solution y_i = (s_i, ν_i, κ_i)."""

    s: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    kkt_residual: float = 0.0
    active_set: FrozenSet[int] = field(default_factory=frozenset)
    solver_iterations: int = 0

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.s, self.nu, self.kappa])

    @property
    def s_inf(self) -> float:
        return float(np.max(np.abs(self.s))) if self.s.size else 0.0


class LocalNlp:
    """
    Decoupled NLP of one agent in the search direction s_i:

        min  f_i(x_i + s_i, x_N) + ρ/2 ‖s_i‖² + c_iᵀ s_i
        s.t. g_i(x_i + s_i, x_N) = 0,  h_i(x_i + s_i, x_N) ≤ 0

    with the neighbor values x_N frozen at the current iterate.
    """

    def __init__(
        self,
        agent: AgentProblem,
        z_base: np.ndarray,
        rho: float,
        sensitivity: np.ndarray,
        mu_offset: int = 0,
    ):
        self.agent = agent
        self.agent_id = agent.agent_id
        self.z_base = as_vector(z_base, agent.dim, f"base point of agent {agent.agent_id}")
        self.rho = float(rho)
        self.c = as_vector(sensitivity, agent.n, f"sensitivity of agent {agent.agent_id}")
        self.mu_offset = mu_offset
        self.n, self.n_g, self.n_h = agent.n, agent.n_g, agent.n_h
        self._own = agent.own

    @classmethod
    def build(
        cls,
        agent: AgentProblem,
        x_i: np.ndarray,
        x_neighbors: Mapping[int, np.ndarray],
        rho: float,
        sensitivities: Mapping[int, np.ndarray],
        mu_offset: int = 0,
    ) -> "LocalNlp":
        """Assemble from data an agent holds itself: own x_i, received x_j and ∇_{x_i}L_j."""
        expected, received = set(agent.neighbor_ids), set(sensitivities)
        if expected != received:
            raise GraphError(
                f"agent {agent.agent_id}: sensitivities expected from {sorted(expected)}, got {sorted(received)}"
            )
        c = np.zeros(agent.n)
        for j in agent.neighbor_ids:
            c += as_vector(sensitivities[j], agent.n, f"sensitivity from {j} to {agent.agent_id}")
        return cls(agent, agent.compose(x_i, x_neighbors), rho, c, mu_offset)

    @property
    def x_base(self) -> np.ndarray:
        return self.z_base[self._own]

    def shifted(self, s: np.ndarray) -> np.ndarray:
        z = self.z_base.copy()
        z[self._own] += s
        return z

    # --- NlpModel interface ---

    def values(self, s: np.ndarray) -> NlpValues:
        z = self.shifted(s)
        agent, own = self.agent, self._own
        return NlpValues(
            f=float(agent.objective(z)) + 0.5 * self.rho * float(s @ s) + float(self.c @ s),
            grad=np.asarray(agent.objective_gradient(z), dtype=float)[own] + self.rho * s + self.c,
            g=np.atleast_1d(np.asarray(agent.eq(z), dtype=float)),
            jac_g=np.asarray(agent.eq_jacobian(z), dtype=float).reshape(self.n_g, agent.dim)[:, own],
            h=np.atleast_1d(np.asarray(agent.ineq(z), dtype=float)),
            jac_h=np.asarray(agent.ineq_jacobian(z), dtype=float).reshape(self.n_h, agent.dim)[:, own],
        )

    def hessian(self, s: np.ndarray, nu: np.ndarray, kappa: np.ndarray) -> np.ndarray:
        oracle = self.oracle(s)
        own = self._own
        return oracle.lagrangian_hessian(nu, kappa)[own, own] + self.rho * np.eye(self.n)

    # --- derivative blocks used by the updates ---

    def oracle(self, s: np.ndarray) -> OracleValues:
        """All agent oracles at the shifted local vector, derivatives w.r.t. the whole z."""
        return self.agent.evaluate(self.shifted(s))

    def block(self, agent_id: int) -> slice:
        return self.agent.blocks[agent_id]


def assemble_local_nlp(
    problem: ProblemGraph,
    agent_id: int,
    point: PrimalDualPoint,
    rho: float,
    sensitivities: Mapping[int, np.ndarray],
) -> LocalNlp:
    """
    Local NLP of ``agent_id`` at ``point`` with c_i = Σ_j ∇_{x_i}L_j.

    Args:
        problem: graph-structured NLP
        agent_id: agent whose subproblem is built
        point: current iterate p^q
        rho: proximal penalty ρ ≥ 0
        sensitivities: neighbor id -> ∇_{x_i}L_j, one vector per neighbor

    Returns:
        LocalNlp: subproblem in the search direction s_i
    """
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    agent = problem.agent(agent_id)
    x_neighbors = {j: point.x[problem.layout.x[j]] for j in agent.neighbor_ids}
    return LocalNlp.build(
        agent,
        point.x[problem.layout.x[agent_id]],
        x_neighbors,
        rho,
        sensitivities,
        mu_offset=problem.layout.mu[agent_id].start,
    )


def solve_all_local(
    problem: ProblemGraph, point: PrimalDualPoint, rho: float, tol: Optional[float] = None
) -> Dict[int, LocalSolution]:
    """Local solutions y_i(p) of every agent, sensitivities taken at ``point``."""
    solutions = {}
    for i in problem.ids:
        sensitivities = {j: neighbor_lagrangian_gradient(problem, j, i, point) for j in problem.neighbors(i)}
        solutions[i] = solve_local_nlp(assemble_local_nlp(problem, i, point, rho, sensitivities), tol=tol)
    return solutions


def solve_local_nlp(
    nlp: LocalNlp,
    warm_start: Optional[LocalSolution] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> LocalSolution:
    """
    Solve a local NLP to KKT tolerance with the dense interior-point method.

    The primal start is always s = 0; the multipliers of ``warm_start`` seed ν and κ.

    Raises:
        LocalInfeasibleError: stalled infeasibility
        LocalSolverError: iteration limit, carrying the best LocalSolution
    """
    tol = settings.LOCAL_TOL if tol is None else tol
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    options = IpmOptions(tol=tol, max_iter=max_iter or settings.LOCAL_MAX_ITER)
    solver = InteriorPointSolver(options)
    nu0 = kappa0 = None
    if warm_start is not None:
        nu0, kappa0 = warm_start.nu, warm_start.kappa

    label = f"agent {nlp.agent_id}"
    try:
        try:
            result = solver.solve(nlp, np.zeros(nlp.n), nu0, kappa0, label=label)
        except LocalSolverError as e:
            if warm_start is None:
                raise
            logger.debug(f"{label}: warm start failed ({e}), retrying cold")
            result = solver.solve(nlp, np.zeros(nlp.n), label=label)
    except LocalSolverError as e:
        if isinstance(e.best, IpmResult):
            e.best = _to_solution(nlp, e.best)
        e.agent_id = nlp.agent_id
        raise

    return _to_solution(nlp, result)


def _to_solution(nlp: LocalNlp, result: IpmResult) -> LocalSolution:
    solution = LocalSolution(
        s=result.s,
        nu=result.nu,
        kappa=result.kappa,
        kkt_residual=result.residual,
        solver_iterations=result.iterations,
    )
    solution.active_set = active_set(nlp, solution, settings.ACTIVE_SET_TAU)
    return solution


def local_kkt_residual(nlp: LocalNlp, y: LocalSolution) -> float:
    """Max-norm KKT residual of the local system at y."""
    _check_solution(nlp, y)
    return kkt_residual(nlp.values(y.s), y.nu, y.kappa)


def classify_constraints(nlp: LocalNlp, y: LocalSolution, tau: float) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Active and degenerate inequality rows, as global μ indices."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    _check_solution(nlp, y)
    if nlp.n_h == 0:
        return frozenset(), frozenset()
    h = nlp.values(y.s).h
    by_multiplier = y.kappa > tau
    by_value = np.abs(h) <= tau
    active = np.flatnonzero(by_multiplier | by_value)
    degenerate = np.flatnonzero(~by_multiplier & by_value)
    return (
        frozenset(int(k) + nlp.mu_offset for k in active),
        frozenset(int(k) + nlp.mu_offset for k in degenerate),
    )


def active_set(nlp: LocalNlp, y: LocalSolution, tau: float = 1e-6) -> FrozenSet[int]:
    """
    Global indices of the active inequalities: κ_k > τ or |h̄_k(s)| ≤ τ.
    Rows meeting only the second test violate strict complementarity and are
    reported as degenerate.
    """
    active, degenerate = classify_constraints(nlp, y, tau)
    if degenerate:
        logger.warning(f"agent {nlp.agent_id}: degenerate active-set classification for rows {sorted(degenerate)}")
    return active


def _check_solution(nlp: LocalNlp, y: LocalSolution) -> None:
    if y.s.shape != (nlp.n,) or y.nu.shape != (nlp.n_g,) or y.kappa.shape != (nlp.n_h,):
        raise DimensionError(
            f"agent {nlp.agent_id}: local solution shapes {y.s.shape}, {y.nu.shape}, {y.kappa.shape}"
        )
