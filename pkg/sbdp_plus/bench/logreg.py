"""Feature-split regularized logistic regression."""

from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.special import expit

from sbdp_plus.core.problem import AgentProblem, ProblemGraph
from sbdp_plus.errors import ConfigurationError
from sbdp_plus.logging import get_logger_loguru

logger = get_logger_loguru(__name__)

NOISE_VARIANCE = 0.1


class LogRegAgent(AgentProblem):
    """
    Agent owning the feature block x_i. Its objective is a 1/M share of the
    full logistic loss, which depends on every block, plus (ε/2)‖x_i‖². The box
    -box ≤ x_i ≤ box is written as 2 n_i inequalities on x_i only.
    """

    def __init__(self, agent_id: int, blocks: Dict[int, np.ndarray], labels: np.ndarray, shares: int, eps_reg: float, box: float):
        n_i = blocks[agent_id].shape[1]
        neighbors = {j: block.shape[1] for j, block in blocks.items() if j != agent_id}
        super().__init__(agent_id, n_i, neighbors, n_h=2 * n_i, constraints_decoupled=True)
        ordered = [blocks[agent_id]] + [blocks[j] for j in self.neighbor_ids]
        self.D = labels[:, None] * np.hstack(ordered)
        self.m = labels.shape[0]
        self.shares = shares
        self.eps_reg = eps_reg
        self.box = box
        self._reg = np.zeros(self.dim)
        self._reg[self.own] = 1.0

    def objective(self, z):
        margins = self.D @ z
        loss = np.mean(np.logaddexp(0.0, -margins)) / self.shares
        return float(loss + 0.5 * self.eps_reg * z[self.own] @ z[self.own])

    def objective_gradient(self, z):
        margins = self.D @ z
        return -(self.D.T @ expit(-margins)) / (self.m * self.shares) + self.eps_reg * self._reg * z

    def objective_hessian(self, z):
        margins = self.D @ z
        weights = expit(margins) * expit(-margins)
        return (self.D.T * weights) @ self.D / (self.m * self.shares) + self.eps_reg * np.diag(self._reg)

    def ineq(self, z):
        x = z[self.own]
        return np.concatenate([x - self.box, -x - self.box])

    def ineq_jacobian(self, z):
        jac = np.zeros((self.n_h, self.dim))
        eye = np.eye(self.n)
        jac[:self.n, self.own] = eye
        jac[self.n:, self.own] = -eye
        return jac

    def ineq_hessians(self, z):
        return np.zeros((self.n_h, self.dim, self.dim))


@dataclass
class LogRegInstance:
    """Random instance: features A (m×n), labels b, generating x_true and the split problem."""

    A: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    agents: int
    eps_reg: float
    box: float
    problem: ProblemGraph

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def blocks(self) -> Dict[int, slice]:
        size = self.n // self.agents
        return {i + 1: slice(i * size, (i + 1) * size) for i in range(self.agents)}

    def objective(self, x: np.ndarray) -> float:
        return float(np.mean(np.logaddexp(0.0, -self.b * (self.A @ x))) + 0.5 * self.eps_reg * x @ x)


def gen_logreg(
    m: int = 200,
    n: int = 100,
    agents: int = 10,
    seed: int = 0,
    eps_reg: float = 0.1,
    box: float = 0.25,
) -> LogRegInstance:
    """
    Draw a feature-split logistic regression instance.

    Features and x_true are i.i.d. standard normal; labels are
    sign(a_kᵀx_true + v_k) with v_k ~ N(0, 0.1). Each array has its own
    Philox stream spawned from ``seed``.

    Raises:
        ConfigurationError: agents does not divide n, or a size is not positive
    """
    if m <= 0 or n <= 0 or agents <= 0:
        raise ConfigurationError(f"m, n and agents must be positive, got {m}, {n}, {agents}")
    if n % agents:
        raise ConfigurationError(f"{agents} agents do not divide n={n} features")
    if box <= 0 or eps_reg < 0:
        raise ConfigurationError(f"box must be positive and eps_reg non-negative, got {box}, {eps_reg}")

    features, truth, noise = (
        np.random.Generator(np.random.Philox(stream)) for stream in np.random.SeedSequence(seed).spawn(3)
    )
    A = features.standard_normal((m, n))
    x_true = truth.standard_normal(n)
    v = noise.normal(0.0, np.sqrt(NOISE_VARIANCE), m)
    b = np.where(A @ x_true + v >= 0.0, 1.0, -1.0)

    size = n // agents
    blocks = {i + 1: A[:, i * size:(i + 1) * size] for i in range(agents)}
    problem = ProblemGraph(
        [LogRegAgent(i, blocks, b, agents, eps_reg, box) for i in blocks],
        name=f"logreg(m={m}, n={n}, M={agents}, seed={seed})",
    )
    logger.info(f"Generated {problem.name}: {int(np.sum(b > 0))} positive labels")
    return LogRegInstance(A=A, b=b, x_true=x_true, agents=agents, eps_reg=eps_reg, box=box, problem=problem)
