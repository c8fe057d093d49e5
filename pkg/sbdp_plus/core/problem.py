from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from sbdp_plus.errors import DimensionError, GraphError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings
from sbdp_plus.utils import as_matrix, as_vector, check_symmetric, fd_jacobian, symmetrize

logger = get_logger_loguru(__name__)

ORACLE_METHODS = (
    "objective_gradient",
    "objective_hessian",
    "eq_jacobian",
    "eq_hessians",
    "ineq_jacobian",
    "ineq_hessians",
)


class AgentProblem(ABC):
    """
    One node of a graph-structured NLP.

    Every oracle takes the local vector ``z = [x_i, x_j for j in neighbor_ids]``,
    neighbors in ascending id order. Derivatives are taken w.r.t. the whole of
    ``z`` so cross terms ``∂/∂x_j`` come out of the same call. Subclasses must
    provide ``objective``; the constraint values default to empty and every
    derivative defaults to central finite differences.
    """

    def __init__(
        self,
        agent_id: int,
        n: int,
        neighbors: Mapping[int, int],
        n_g: int = 0,
        n_h: int = 0,
        constraints_decoupled: bool = False,
        neighbor_affine: bool = False,
        decoupled_eq: Optional[Sequence[int]] = None,
        decoupled_ineq: Optional[Sequence[int]] = None,
    ):
        """
        Args:
            agent_id: identifier of the agent
            n: number of own decision variables n_i
            neighbors: neighbor id -> neighbor dimension n_j
            n_g: number of equality constraints
            n_h: number of inequality constraints
            constraints_decoupled: all constraints depend on x_i only
            neighbor_affine: ∇_{x_j} L_i depends on (x_i, x_j, λ_i, μ_i) only
            decoupled_eq: equality rows that depend on x_i only
            decoupled_ineq: inequality rows that depend on x_i only
        """
        if agent_id in neighbors:
            raise GraphError(f"agent {agent_id} lists itself as a neighbor")
        self.agent_id = agent_id
        self.n = int(n)
        self.n_g = int(n_g)
        self.n_h = int(n_h)
        self.neighbor_dims: Dict[int, int] = {j: int(neighbors[j]) for j in sorted(neighbors)}
        self.neighbor_ids: Tuple[int, ...] = tuple(self.neighbor_dims)
        self.constraints_decoupled = constraints_decoupled
        self.neighbor_affine = neighbor_affine
        if constraints_decoupled:
            decoupled_eq = range(self.n_g)
            decoupled_ineq = range(self.n_h)
        self.decoupled_eq = np.array(sorted(decoupled_eq or ()), dtype=int)
        self.decoupled_ineq = np.array(sorted(decoupled_ineq or ()), dtype=int)

        self.blocks: Dict[int, slice] = {agent_id: slice(0, self.n)}
        offset = self.n
        for j, n_j in self.neighbor_dims.items():
            self.blocks[j] = slice(offset, offset + n_j)
            offset += n_j
        self.dim = offset

        unused = {"eq": self.n_g == 0, "ineq": self.n_h == 0}
        self.fallback_oracles = [
            method for method in ORACLE_METHODS
            if getattr(type(self), method) is getattr(AgentProblem, method)
            and not unused.get(method.split("_")[0], False)
        ]

    # --- layout ---

    @property
    def own(self) -> slice:
        return self.blocks[self.agent_id]

    @property
    def p_dim(self) -> int:
        return self.n + self.n_g + self.n_h

    def compose(self, x_i: np.ndarray, x_neighbors: Mapping[int, np.ndarray]) -> np.ndarray:
        """Build z from the own block and one block per neighbor."""
        missing = set(self.neighbor_ids) - set(x_neighbors)
        if missing:
            raise DimensionError(f"agent {self.agent_id}: missing neighbor values {sorted(missing)}")
        parts = [as_vector(x_i, self.n, f"x_{self.agent_id}")]
        parts += [
            as_vector(x_neighbors[j], self.neighbor_dims[j], f"x_{j} seen by agent {self.agent_id}")
            for j in self.neighbor_ids
        ]
        return np.concatenate(parts)

    # --- oracles ---

    @abstractmethod
    def objective(self, z: np.ndarray) -> float:
        """Objective f_i(x_i, x_{N_i})."""

    def eq(self, z: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def ineq(self, z: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def objective_gradient(self, z: np.ndarray) -> np.ndarray:
        return fd_jacobian(lambda v: np.array([self.objective(v)]), z, settings.FD_STEP)[0]

    def objective_hessian(self, z: np.ndarray) -> np.ndarray:
        return symmetrize(fd_jacobian(self.objective_gradient, z, np.sqrt(settings.FD_STEP)))

    def eq_jacobian(self, z: np.ndarray) -> np.ndarray:
        if self.n_g == 0:
            return np.zeros((0, self.dim))
        return fd_jacobian(self.eq, z, settings.FD_STEP)

    def ineq_jacobian(self, z: np.ndarray) -> np.ndarray:
        if self.n_h == 0:
            return np.zeros((0, self.dim))
        return fd_jacobian(self.ineq, z, settings.FD_STEP)

    def eq_hessians(self, z: np.ndarray) -> np.ndarray:
        """Per-component Hessians, shape (n_g, dim, dim)."""
        return self._component_hessians(self.eq_jacobian, self.n_g, z)

    def ineq_hessians(self, z: np.ndarray) -> np.ndarray:
        """Per-component Hessians, shape (n_h, dim, dim)."""
        return self._component_hessians(self.ineq_jacobian, self.n_h, z)

    def _component_hessians(self, jacobian, count: int, z: np.ndarray) -> np.ndarray:
        if count == 0:
            return np.zeros((0, self.dim, self.dim))
        flat = fd_jacobian(lambda v: jacobian(v).reshape(-1), z, np.sqrt(settings.FD_STEP))
        stacked = flat.reshape(count, self.dim, self.dim)
        return 0.5 * (stacked + stacked.transpose(0, 2, 1))

    # --- checked evaluation ---

    def evaluate(self, z: np.ndarray) -> "OracleValues":
        """Evaluate every oracle at z and check dimensions and Hessian symmetry."""
        z = as_vector(z, self.dim, f"local vector of agent {self.agent_id}")
        tag = f"agent {self.agent_id}"
        hess = as_matrix(self.objective_hessian(z), self.dim, self.dim, f"{tag} objective Hessian")
        hess_g = np.asarray(self.eq_hessians(z), dtype=float).reshape(self.n_g, self.dim, self.dim)
        hess_h = np.asarray(self.ineq_hessians(z), dtype=float).reshape(self.n_h, self.dim, self.dim)
        return OracleValues(
            f=float(self.objective(z)),
            grad=as_vector(self.objective_gradient(z), self.dim, f"{tag} objective gradient"),
            hess=check_symmetric(hess, f"{tag} objective Hessian"),
            g=as_vector(self.eq(z), self.n_g, f"{tag} equalities"),
            jac_g=as_matrix(self.eq_jacobian(z), self.n_g, self.dim, f"{tag} equality Jacobian"),
            h=as_vector(self.ineq(z), self.n_h, f"{tag} inequalities"),
            jac_h=as_matrix(self.ineq_jacobian(z), self.n_h, self.dim, f"{tag} inequality Jacobian"),
            hess_g=check_symmetric(hess_g, f"{tag} equality Hessians"),
            hess_h=check_symmetric(hess_h, f"{tag} inequality Hessians"),
        )

    def lagrangian(self, z: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> float:
        """L_i = f_i + λ_iᵀ g_i + μ_iᵀ h_i."""
        return float(self.objective(z) + lam @ np.atleast_1d(self.eq(z)) + mu @ np.atleast_1d(self.ineq(z)))

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(id={self.agent_id}, n={self.n}, n_g={self.n_g}, "
            f"n_h={self.n_h}, neighbors={list(self.neighbor_ids)})"
        )


@dataclass
class OracleValues:
    """All oracle outputs of one agent at one local vector."""

    f: float
    grad: np.ndarray
    hess: np.ndarray
    g: np.ndarray
    jac_g: np.ndarray
    h: np.ndarray
    jac_h: np.ndarray
    hess_g: np.ndarray
    hess_h: np.ndarray

    def lagrangian_gradient(self, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        return self.grad + self.jac_g.T @ lam + self.jac_h.T @ mu

    def lagrangian_hessian(self, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        hess = self.hess.copy()
        if lam.size:
            hess += np.tensordot(lam, self.hess_g, axes=1)
        if mu.size:
            hess += np.tensordot(mu, self.hess_h, axes=1)
        return hess


@dataclass
class AgentSlice:
    """Per-agent part p_i = (x_i, λ_i, μ_i) of a primal-dual point."""

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.mu])

    @classmethod
    def from_vector(cls, vector: np.ndarray, n: int, n_g: int) -> "AgentSlice":
        vector = np.asarray(vector, dtype=float)
        return cls(x=vector[:n].copy(), lam=vector[n:n + n_g].copy(), mu=vector[n + n_g:].copy())

    def copy(self) -> "AgentSlice":
        return AgentSlice(self.x.copy(), self.lam.copy(), self.mu.copy())


@dataclass
class PointLayout:
    """Global index map: agent id -> slices into x, λ and μ."""

    x: Dict[int, slice]
    lam: Dict[int, slice]
    mu: Dict[int, slice]
    n: int
    n_g: int
    n_h: int

    @property
    def p(self) -> int:
        return self.n + self.n_g + self.n_h


@dataclass
class PrimalDualPoint:
    """Stacked primal-dual vector p = (x, λ, μ).

    The sign of μ is not enforced here; residual functions check it.
    """

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    layout: PointLayout = field(repr=False)

    def __post_init__(self):
        self.x = as_vector(self.x, self.layout.n, "x")
        self.lam = as_vector(self.lam, self.layout.n_g, "lambda")
        self.mu = as_vector(self.mu, self.layout.n_h, "mu")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.mu])

    @classmethod
    def from_vector(cls, vector, layout: PointLayout) -> "PrimalDualPoint":
        vector = as_vector(vector, layout.p, "primal-dual vector")
        n, n_g = layout.n, layout.n_g
        return cls(vector[:n], vector[n:n + n_g], vector[n + n_g:], layout)

    def agent(self, agent_id: int) -> AgentSlice:
        return AgentSlice(
            x=self.x[self.layout.x[agent_id]].copy(),
            lam=self.lam[self.layout.lam[agent_id]].copy(),
            mu=self.mu[self.layout.mu[agent_id]].copy(),
        )

    def slices(self) -> Dict[int, AgentSlice]:
        return {i: self.agent(i) for i in self.layout.x}

    def with_agent(self, agent_id: int, part: AgentSlice) -> "PrimalDualPoint":
        updated = self.copy()
        updated.x[self.layout.x[agent_id]] = part.x
        updated.lam[self.layout.lam[agent_id]] = part.lam
        updated.mu[self.layout.mu[agent_id]] = part.mu
        return updated

    @classmethod
    def from_slices(cls, parts: Mapping[int, AgentSlice], layout: PointLayout) -> "PrimalDualPoint":
        x, lam, mu = np.zeros(layout.n), np.zeros(layout.n_g), np.zeros(layout.n_h)
        for i, part in parts.items():
            x[layout.x[i]] = part.x
            lam[layout.lam[i]] = part.lam
            mu[layout.mu[i]] = part.mu
        return cls(x, lam, mu, layout)

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(self.x.copy(), self.lam.copy(), self.mu.copy(), self.layout)


class ProblemGraph:
    """
    Graph-structured NLP: agents plus the undirected coupling edges implied by
    their neighbor declarations. Immutable after construction.
    """

    def __init__(self, agents: Iterable[AgentProblem], name: str = "problem"):
        self.name = name
        self.agents: Dict[int, AgentProblem] = {a.agent_id: a for a in sorted(agents, key=lambda a: a.agent_id)}
        if not self.agents:
            raise GraphError("a problem graph needs at least one agent")
        self.edges = self._build_edges()
        self._check_connected()
        self.layout = self._build_layout()

        for agent in self.agents.values():
            if agent.fallback_oracles:
                logger.warning(
                    f"{name}: agent {agent.agent_id} uses finite-difference fallbacks for "
                    f"{', '.join(agent.fallback_oracles)}"
                )

    def _build_edges(self) -> frozenset:
        edges = set()
        for i, agent in self.agents.items():
            for j, n_j in agent.neighbor_dims.items():
                if j not in self.agents:
                    raise GraphError(f"agent {i} lists unknown neighbor {j}")
                if i not in self.agents[j].neighbor_dims:
                    raise GraphError(f"edge ({i}, {j}) is not symmetric")
                if self.agents[j].n != n_j:
                    raise GraphError(
                        f"agent {i} declares n_{j}={n_j} but agent {j} has n={self.agents[j].n}"
                    )
                edges.add((min(i, j), max(i, j)))
        return frozenset(edges)

    def _adjacency(self) -> csr_matrix:
        index = {i: k for k, i in enumerate(self.agents)}
        rows = [index[i] for i, j in self.edges] + [index[j] for i, j in self.edges]
        cols = [index[j] for i, j in self.edges] + [index[i] for i, j in self.edges]
        size = len(self.agents)
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))

    def _check_connected(self) -> None:
        count, _ = connected_components(self._adjacency(), directed=False)
        if count != 1:
            raise GraphError(f"{self.name}: coupling graph has {count} connected components")

    def _build_layout(self) -> PointLayout:
        x, lam, mu = {}, {}, {}
        n = n_g = n_h = 0
        for i, agent in self.agents.items():
            x[i] = slice(n, n + agent.n)
            lam[i] = slice(n_g, n_g + agent.n_g)
            mu[i] = slice(n_h, n_h + agent.n_h)
            n, n_g, n_h = n + agent.n, n_g + agent.n_g, n_h + agent.n_h
        return PointLayout(x=x, lam=lam, mu=mu, n=n, n_g=n_g, n_h=n_h)

    # --- structure ---

    @property
    def ids(self) -> List[int]:
        return list(self.agents)

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def n_g(self) -> int:
        return self.layout.n_g

    @property
    def n_h(self) -> int:
        return self.layout.n_h

    @property
    def p(self) -> int:
        return self.layout.p

    def agent(self, agent_id: int) -> AgentProblem:
        try:
            return self.agents[agent_id]
        except KeyError:
            raise GraphError(f"{self.name}: unknown agent {agent_id}") from None

    def neighbors(self, agent_id: int) -> Tuple[int, ...]:
        return self.agent(agent_id).neighbor_ids

    def is_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def diameter(self) -> int:
        """Longest shortest path in hops; flag aggregation needs this many rounds."""
        hops = shortest_path(self._adjacency(), directed=False, unweighted=True)
        return int(np.max(hops))

    def global_index(self, agent_id: int) -> np.ndarray:
        """Global x indices of the entries of agent i's local vector z."""
        agent = self.agent(agent_id)
        parts = [np.arange(self.layout.x[agent_id].start, self.layout.x[agent_id].stop)]
        parts += [np.arange(self.layout.x[j].start, self.layout.x[j].stop) for j in agent.neighbor_ids]
        return np.concatenate(parts).astype(int)

    def local_vector(self, agent_id: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[self.global_index(agent_id)]

    # --- points ---

    def zeros(self) -> PrimalDualPoint:
        return PrimalDualPoint(np.zeros(self.n), np.zeros(self.n_g), np.zeros(self.n_h), self.layout)

    def point(self, x, lam=None, mu=None) -> PrimalDualPoint:
        lam = np.zeros(self.n_g) if lam is None else lam
        mu = np.zeros(self.n_h) if mu is None else mu
        return PrimalDualPoint(x, lam, mu, self.layout)

    def point_from_vector(self, vector) -> PrimalDualPoint:
        return PrimalDualPoint.from_vector(vector, self.layout)

    # --- central assembly ---

    def evaluate_all(self, x: np.ndarray) -> Dict[int, OracleValues]:
        return {i: agent.evaluate(self.local_vector(i, x)) for i, agent in self.agents.items()}

    def objective(self, x: np.ndarray) -> float:
        return sum(float(a.objective(self.local_vector(i, x))) for i, a in self.agents.items())

    def eq(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([np.atleast_1d(a.eq(self.local_vector(i, x))) for i, a in self.agents.items()] + [np.zeros(0)])

    def ineq(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([np.atleast_1d(a.ineq(self.local_vector(i, x))) for i, a in self.agents.items()] + [np.zeros(0)])

    def central_derivatives(self, x: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> "CentralDerivatives":
        """Scatter all local oracle outputs into central vectors and matrices."""
        values = self.evaluate_all(x)
        grad_f = np.zeros(self.n)
        hess = np.zeros((self.n, self.n))
        g, h = np.zeros(self.n_g), np.zeros(self.n_h)
        jac_g, jac_h = np.zeros((self.n_g, self.n)), np.zeros((self.n_h, self.n))
        for i, val in values.items():
            idx = self.global_index(i)
            lam_i, mu_i = lam[self.layout.lam[i]], mu[self.layout.mu[i]]
            grad_f[idx] += val.grad
            hess[np.ix_(idx, idx)] += val.lagrangian_hessian(lam_i, mu_i)
            g[self.layout.lam[i]] = val.g
            h[self.layout.mu[i]] = val.h
            jac_g[self.layout.lam[i].start:self.layout.lam[i].stop, idx] = val.jac_g
            jac_h[self.layout.mu[i].start:self.layout.mu[i].stop, idx] = val.jac_h
        return CentralDerivatives(
            grad_f=grad_f, hess_l=symmetrize(hess), g=g, h=h, jac_g=jac_g, jac_h=jac_h, local=values
        )

    def __repr__(self) -> str:
        return f"ProblemGraph(name={self.name!r}, agents={len(self.agents)}, n={self.n}, n_g={self.n_g}, n_h={self.n_h})"


@dataclass
class CentralDerivatives:
    """Central gradient, Lagrangian Hessian and constraint Jacobians at one point."""

    grad_f: np.ndarray
    hess_l: np.ndarray
    g: np.ndarray
    h: np.ndarray
    jac_g: np.ndarray
    jac_h: np.ndarray
    local: Dict[int, OracleValues]

    def lagrangian_gradient(self, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        return self.grad_f + self.jac_g.T @ lam + self.jac_h.T @ mu
