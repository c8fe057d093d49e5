import numpy as np
import pytest

from sbdp_plus.bench.logreg import gen_logreg
from sbdp_plus.bench.problems import example31, example51, nlp61
from sbdp_plus.core.kkt import neighbor_lagrangian_gradient
from sbdp_plus.errors import DimensionError, GraphError, LocalSolverError
from sbdp_plus.solvers.central import solve_central
from sbdp_plus.solvers.ipm import InteriorPointSolver, IpmOptions, NlpValues
from sbdp_plus.solvers.local_nlp import (
    LocalSolution,
    assemble_local_nlp,
    classify_constraints,
    local_kkt_residual,
    solve_all_local,
    solve_local_nlp,
)


def sensitivities_at(problem, agent_id, point):
    return {j: neighbor_lagrangian_gradient(problem, j, agent_id, point) for j in problem.neighbors(agent_id)}


class TestAssembly:
    """Local NLP assembly from the data an agent holds"""

    def setup_method(self):
        self.problem = nlp61()
        self.point = self.problem.point_from_vector([1.4, 1.4, 0.0, 0.0])

    def test_sensitivity_enters_linearly(self):
        sens = {2: np.array([0.25])}
        nlp = assemble_local_nlp(self.problem, 1, self.point, 0.5, sens)
        s = np.array([0.1])
        values = nlp.values(s)
        # f_1(x1 + s) = 2(1.5 - 1)², ρ/2 s², c s
        assert values.f == pytest.approx(2 * 0.5 ** 2 + 0.25 * 0.01 + 0.025)
        assert values.grad[0] == pytest.approx(4 * 0.5 + 0.5 * 0.1 + 0.25)
        assert nlp.hessian(s, np.zeros(0), np.zeros(1))[0, 0] == pytest.approx(4.5)

    def test_missing_sensitivity(self):
        with pytest.raises(GraphError):
            assemble_local_nlp(self.problem, 1, self.point, 0.0, {})

    def test_wrong_sensitivity_length(self):
        with pytest.raises(DimensionError):
            assemble_local_nlp(self.problem, 1, self.point, 0.0, {2: np.zeros(3)})

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            assemble_local_nlp(self.problem, 1, self.point, -1.0, {2: np.zeros(1)})


class TestLocalSolve:
    """Interior-point solves of the local subproblems"""

    def setup_method(self):
        self.problem = nlp61()
        self.p_star = solve_central(self.problem)

    def test_fixed_point_at_kkt(self):
        solutions = solve_all_local(self.problem, self.p_star, rho=0.0)
        for i, y in solutions.items():
            part = self.p_star.agent(i)
            assert y.s_inf <= 1e-6, f"agent {i} moved by {y.s_inf}"
            np.testing.assert_allclose(y.kappa, part.mu, atol=1e-6)

    def test_active_set_uses_global_indices(self):
        solutions = solve_all_local(self.problem, self.p_star, rho=0.0)
        assert solutions[1].active_set == frozenset()
        assert solutions[2].active_set == frozenset({1})

    def test_solution_satisfies_local_kkt(self):
        point = self.problem.point_from_vector([1.4, 1.4, 0.0, 0.0])
        nlp = assemble_local_nlp(self.problem, 2, point, 0.0, sensitivities_at(self.problem, 2, point))
        y = solve_local_nlp(nlp, tol=1e-10)
        assert local_kkt_residual(nlp, y) <= 1e-10
        # 1.4 (1.4 + s) = 1.5 once the product constraint is active
        assert y.s[0] == pytest.approx(1.5 / 1.4 - 1.4, abs=1e-8)
        assert y.kappa[0] > 0

    def test_warm_start_keeps_solution(self):
        point = self.problem.point_from_vector([1.4, 1.4, 0.0, 0.0])
        nlp = assemble_local_nlp(self.problem, 2, point, 0.0, sensitivities_at(self.problem, 2, point))
        cold = solve_local_nlp(nlp)
        warm = solve_local_nlp(nlp, warm_start=cold)
        np.testing.assert_allclose(warm.s, cold.s, atol=1e-8)
        np.testing.assert_allclose(warm.kappa, cold.kappa, atol=1e-6)

    def test_shape_mismatch_in_residual(self):
        nlp = assemble_local_nlp(self.problem, 1, self.p_star, 0.0, sensitivities_at(self.problem, 1, self.p_star))
        bad = LocalSolution(s=np.zeros(2), nu=np.zeros(0), kappa=np.zeros(1))
        with pytest.raises(DimensionError):
            local_kkt_residual(nlp, bad)

    def test_classify_rejects_non_positive_tau(self):
        nlp = assemble_local_nlp(self.problem, 1, self.p_star, 0.0, sensitivities_at(self.problem, 1, self.p_star))
        y = solve_local_nlp(nlp)
        with pytest.raises(ValueError):
            classify_constraints(nlp, y, 0.0)

    def test_iteration_limit_carries_best_iterate(self):
        point = self.problem.point_from_vector([1.4, 1.4, 0.0, 0.0])
        nlp = assemble_local_nlp(self.problem, 2, point, 0.0, sensitivities_at(self.problem, 2, point))
        with pytest.raises(LocalSolverError) as info:
            solve_local_nlp(nlp, tol=1e-12, max_iter=1)
        assert isinstance(info.value.best, LocalSolution)
        assert info.value.agent_id == 2


class TestFixedPointOnAllProblems:
    """One local solve at p* does not move any agent"""

    @pytest.mark.parametrize("problem, rho", [
        (example31(a=0.5), 0.0),
        (example31(a=4.0, with_g2=True), 0.0),
        (example51(), 1.0),
        (nlp61(), 0.0),
        (gen_logreg(m=20, n=4, agents=2, seed=1).problem, 0.01),
    ])
    def test_zero_step_at_solution(self, problem, rho):
        p_star = solve_central(problem)
        solutions = solve_all_local(problem, p_star, rho)
        assert max(y.s_inf for y in solutions.values()) <= 1e-6


class TestInteriorPoint:
    def test_bound_constrained_quadratic(self):
        class Box:
            n, n_g, n_h = 1, 0, 2

            def values(self, s):
                return NlpValues(
                    f=float((s[0] - 3.0) ** 2), grad=np.array([2 * (s[0] - 3.0)]),
                    g=np.zeros(0), jac_g=np.zeros((0, 1)),
                    h=np.array([s[0] - 1.0, -s[0] - 1.0]), jac_h=np.array([[1.0], [-1.0]]),
                )

            def hessian(self, s, nu, kappa):
                return np.array([[2.0]])

        result = InteriorPointSolver(IpmOptions(tol=1e-10)).solve(Box(), np.zeros(1))
        assert result.s[0] == pytest.approx(1.0, abs=1e-8)
        np.testing.assert_allclose(result.kappa, [4.0, 0.0], atol=1e-7)

    @pytest.mark.parametrize("kappa0", [0.0, 1.0, 5.0])
    def test_multipliers_from_an_infeasible_start(self, kappa0):
        class Shifted:
            # min s² s.t. s ≤ -0.5, with h(0) > 0
            n, n_g, n_h = 1, 0, 1

            def values(self, s):
                return NlpValues(
                    f=float(s[0] ** 2), grad=np.array([2 * s[0]]),
                    g=np.zeros(0), jac_g=np.zeros((0, 1)),
                    h=np.array([s[0] + 0.5]), jac_h=np.array([[1.0]]),
                )

            def hessian(self, s, nu, kappa):
                return np.array([[2.0]])

        solver = InteriorPointSolver(IpmOptions(tol=1e-10))
        result = solver.solve(Shifted(), np.zeros(1), np.zeros(0), np.array([kappa0]))
        assert result.s[0] == pytest.approx(-0.5, abs=1e-8)
        assert result.kappa[0] == pytest.approx(1.0, abs=1e-7)
