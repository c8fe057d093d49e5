"""Built-in two-agent benchmark problems with analytic oracles.

In every class the local vector is z = [own variable, neighbor variable].
"""

import numpy as np

from sbdp_plus.core.problem import AgentProblem, ProblemGraph


class QuadraticCouplingAgent(AgentProblem):
    """f_i = 0.5 x_i² with an optional linear coupling equality c_own·x_i + c_other·x_j = 0."""

    def __init__(self, agent_id: int, other: int, coefficients=None):
        super().__init__(agent_id, 1, {other: 1}, n_g=0 if coefficients is None else 1, neighbor_affine=True)
        self.coefficients = None if coefficients is None else np.asarray(coefficients, dtype=float)

    def objective(self, z):
        return 0.5 * z[0] ** 2

    def objective_gradient(self, z):
        return np.array([z[0], 0.0])

    def objective_hessian(self, z):
        return np.diag([1.0, 0.0])

    def eq(self, z):
        if self.coefficients is None:
            return np.zeros(0)
        return np.array([self.coefficients @ z])

    def eq_jacobian(self, z):
        if self.coefficients is None:
            return np.zeros((0, 2))
        return self.coefficients.reshape(1, 2)

    def eq_hessians(self, z):
        return np.zeros((self.n_g, 2, 2))


class BilinearAgent(AgentProblem):
    """f_i = 0.5 x_i x_j, agent 1 additionally owns x_1 - x_2 = 0."""

    def __init__(self, agent_id: int, other: int, owns_constraint: bool):
        super().__init__(agent_id, 1, {other: 1}, n_g=int(owns_constraint), neighbor_affine=True)

    def objective(self, z):
        return 0.5 * z[0] * z[1]

    def objective_gradient(self, z):
        return 0.5 * np.array([z[1], z[0]])

    def objective_hessian(self, z):
        return np.array([[0.0, 0.5], [0.5, 0.0]])

    def eq(self, z):
        return np.array([z[0] - z[1]]) if self.n_g else np.zeros(0)

    def eq_jacobian(self, z):
        return np.array([[1.0, -1.0]]) if self.n_g else np.zeros((0, 2))

    def eq_hessians(self, z):
        return np.zeros((self.n_g, 2, 2))


class ProductConstraintAgent(AgentProblem):
    """
    f_i = w (x_i - t)² with one inequality sign·x_i x_j + offset ≤ 0.
    """

    def __init__(self, agent_id: int, other: int, weight: float, target: float, sign: float, offset: float):
        super().__init__(agent_id, 1, {other: 1}, n_h=1, neighbor_affine=True)
        self.weight, self.target, self.sign, self.offset = weight, target, sign, offset

    def objective(self, z):
        return self.weight * (z[0] - self.target) ** 2

    def objective_gradient(self, z):
        return np.array([2.0 * self.weight * (z[0] - self.target), 0.0])

    def objective_hessian(self, z):
        return np.diag([2.0 * self.weight, 0.0])

    def ineq(self, z):
        return np.array([self.offset + self.sign * z[0] * z[1]])

    def ineq_jacobian(self, z):
        return self.sign * np.array([[z[1], z[0]]])

    def ineq_hessians(self, z):
        return self.sign * np.array([[[0.0, 1.0], [1.0, 0.0]]])


def example31(a: float = 0.5, with_g2: bool = False) -> ProblemGraph:
    """min 0.5x_1² + 0.5x_2²  s.t. x_1 + a x_2 = 0 (agent 1), optionally x_1 + x_2 = 0 (agent 2)."""
    agents = [
        QuadraticCouplingAgent(1, 2, coefficients=[1.0, a]),
        QuadraticCouplingAgent(2, 1, coefficients=[1.0, 1.0] if with_g2 else None),
    ]
    return ProblemGraph(agents, name=f"example31(a={a:g}{', g2' if with_g2 else ''})")


def example51() -> ProblemGraph:
    """min x_1 x_2  s.t. x_1 - x_2 = 0, the objective split in equal halves."""
    return ProblemGraph([BilinearAgent(1, 2, True), BilinearAgent(2, 1, False)], name="example51")


def nlp61() -> ProblemGraph:
    """
    min 2(x_1 - 1)² + (x_2 - 2)²
    s.t. -1 - x_1 x_2 ≤ 0 (agent 1),  -1.5 + x_1 x_2 ≤ 0 (agent 2)
    """
    agents = [
        ProductConstraintAgent(1, 2, weight=2.0, target=1.0, sign=-1.0, offset=-1.0),
        ProductConstraintAgent(2, 1, weight=1.0, target=2.0, sign=1.0, offset=-1.5),
    ]
    return ProblemGraph(agents, name="nlp61")
