import numpy as np
import pytest

from sbdp_plus.bench.catalog import build_problem
from sbdp_plus.bench.logreg import gen_logreg
from sbdp_plus.bench.problems import ProductConstraintAgent, example31, example51, nlp61
from sbdp_plus.core.audit import finite_difference_audit
from sbdp_plus.core.kkt import (
    central_kkt_residual,
    central_lagrangian,
    kkt_parts,
    local_lagrangians,
    neighbor_lagrangian_gradient,
)
from sbdp_plus.core.problem import AgentProblem, ProblemGraph
from sbdp_plus.errors import DimensionError, GraphError
from sbdp_plus.logging import configure_logging, get_logger_loguru
from sbdp_plus.settings import Settings, settings
from sbdp_plus.solvers.central import solve_central

logger = get_logger_loguru(__name__)


class QuarticAgent(AgentProblem):
    """Objective only; every derivative comes from the finite-difference fallback."""

    def __init__(self, agent_id, neighbors):
        super().__init__(agent_id, 1, neighbors)

    def objective(self, z):
        return float(np.sum(z ** 4) + z[0] * np.sum(z))


class TestProblemGraph:
    """Graph construction, layout and point handling"""

    def setup_method(self):
        self.problem = nlp61()

    def test_layout(self):
        problem = self.problem
        assert problem.ids == [1, 2]
        assert (problem.n, problem.n_g, problem.n_h, problem.p) == (2, 0, 2, 4)
        assert problem.layout.mu[2] == slice(1, 2)
        assert problem.edges == frozenset({(1, 2)})
        assert problem.diameter() == 1

    def test_local_vector_is_own_block_first(self):
        x = np.array([3.0, 5.0])
        np.testing.assert_array_equal(self.problem.local_vector(1, x), [3.0, 5.0])
        np.testing.assert_array_equal(self.problem.local_vector(2, x), [5.0, 3.0])

    def test_point_round_trip_through_agent_slices(self):
        point = self.problem.point_from_vector([1.0, 2.0, 0.1, 0.2])
        rebuilt = type(point).from_slices(point.slices(), self.problem.layout)
        np.testing.assert_array_equal(rebuilt.vector, point.vector)
        assert point.agent(2).mu[0] == pytest.approx(0.2)

    def test_wrong_point_length(self):
        with pytest.raises(DimensionError):
            self.problem.point_from_vector([1.0, 2.0, 0.0])

    def test_asymmetric_edge(self):
        one_way = ProductConstraintAgent(1, 2, 1.0, 0.0, 1.0, 0.0)
        lonely = QuarticAgent(2, {})
        with pytest.raises(GraphError):
            ProblemGraph([one_way, lonely])

    def test_disconnected_graph(self):
        with pytest.raises(GraphError, match="connected components"):
            ProblemGraph([QuarticAgent(1, {}), QuarticAgent(2, {})])

    def test_unknown_neighbor(self):
        with pytest.raises(GraphError, match="unknown neighbor"):
            ProblemGraph([QuarticAgent(1, {7: 1})])

    def test_self_neighbor(self):
        with pytest.raises(GraphError):
            QuarticAgent(1, {1: 1})

    def test_unknown_agent(self):
        with pytest.raises(GraphError):
            self.problem.agent(9)

    def test_missing_neighbor_value(self):
        with pytest.raises(DimensionError):
            self.problem.agent(1).compose(np.zeros(1), {})


class TestOracles:
    """Analytic oracles, finite-difference fallback and the derivative audit"""

    def test_fallback_oracles_are_reported(self):
        agent = QuarticAgent(1, {2: 1})
        assert agent.fallback_oracles == ["objective_gradient", "objective_hessian"]
        assert example51().agent(1).fallback_oracles == []

    def test_fallback_gradient_matches_analytic(self):
        agent = QuarticAgent(1, {2: 1})
        z = np.array([0.7, -1.3])
        exact = np.array([4 * z[0] ** 3 + 2 * z[0] + z[1], 4 * z[1] ** 3 + z[0]])
        np.testing.assert_allclose(agent.objective_gradient(z), exact, rtol=1e-6)
        hessian = agent.objective_hessian(z)
        np.testing.assert_allclose(hessian, hessian.T)
        assert hessian[0, 1] == pytest.approx(1.0, abs=1e-4)

    def test_asymmetric_objective_hessian_is_rejected(self):
        class Skewed(ProductConstraintAgent):
            def objective_hessian(self, z):
                return np.array([[2.0, 1.0], [0.0, 2.0]])

        agent = Skewed(1, 2, 1.0, 1.0, -1.0, 1.5)
        with pytest.raises(DimensionError, match="objective Hessian"):
            agent.evaluate(np.array([1.0, 1.0]))

    def test_asymmetric_constraint_hessian_is_rejected(self):
        class Skewed(ProductConstraintAgent):
            def ineq_hessians(self, z):
                return np.array([[[0.0, 1.0], [1.0 + 1e-6, 0.0]]])

        agent = Skewed(1, 2, 1.0, 1.0, -1.0, 1.5)
        with pytest.raises(DimensionError, match="inequality Hessians"):
            agent.evaluate(np.array([1.0, 1.0]))

    @pytest.mark.parametrize("name, params", [
        ("example31", {"a": 0.5}),
        ("example31", {"a": 4.0, "with_g2": True}),
        ("example51", {}),
        ("nlp61", {}),
    ])
    def test_audit_passes_on_builtin_problems(self, name, params):
        problem = build_problem(name, **params)
        rng = np.random.default_rng(3)
        point = problem.point_from_vector(rng.normal(size=problem.p))
        report = finite_difference_audit(problem, point)
        assert report.passed, f"audit failures: {report.failures()}"
        assert report.entries

    def test_audit_passes_on_logreg(self):
        instance = gen_logreg(m=30, n=6, agents=3, seed=4)
        problem = instance.problem
        point = problem.point_from_vector(0.1 * np.ones(problem.p))
        report = finite_difference_audit(problem, point)
        assert report.passed, f"audit failures: {report.failures()}"

    def test_audit_flags_a_wrong_gradient(self):
        class WrongGradient(ProductConstraintAgent):
            def objective_gradient(self, z):
                return super().objective_gradient(z) + np.array([1.0, 0.0])

        problem = ProblemGraph([
            WrongGradient(1, 2, 2.0, 1.0, -1.0, -1.0),
            ProductConstraintAgent(2, 1, 1.0, 2.0, 1.0, -1.5),
        ])
        report = finite_difference_audit(problem, problem.zeros())
        failed = {(entry.agent_id, entry.oracle) for entry in report.failures()}
        assert failed == {(1, "objective_gradient")}

    def test_audit_rejects_non_positive_step(self):
        with pytest.raises(ValueError):
            finite_difference_audit(nlp61(), nlp61().zeros(), h=0.0)


class TestKkt:
    """Lagrangians, sensitivities and the central KKT residual"""

    def setup_method(self):
        self.problem = nlp61()
        self.p_star = solve_central(self.problem)

    def test_nlp61_solution(self):
        p_star = self.p_star
        np.testing.assert_allclose(p_star.x, [0.8166, 1.8369], atol=1e-3)
        np.testing.assert_allclose(p_star.mu, [0.0, 0.3994], atol=1e-3)
        assert central_kkt_residual(self.problem, p_star) <= 1e-8

    def test_residual_parts_at_a_non_kkt_point(self):
        point = self.problem.point_from_vector([1.4, 1.4, 0.0, -0.5])
        parts = kkt_parts(self.problem, point)
        assert parts["dual_sign"] == pytest.approx(0.5)
        assert parts["inequality"] == pytest.approx(1.96 - 1.5)
        assert central_kkt_residual(self.problem, point) == max(parts.values())

    def test_lagrangian_splits_across_agents(self):
        point = self.problem.point_from_vector([1.2, 0.7, 0.3, 0.6])
        total = sum(local_lagrangians(self.problem, point).values())
        assert total == pytest.approx(central_lagrangian(self.problem, point))

    def test_neighbor_gradient(self):
        point = self.problem.point_from_vector([1.2, 0.7, 0.3, 0.6])
        # L_1 = 2(x1 - 1)² + μ1(-1 - x1 x2): ∂/∂x2 = -μ1 x1
        assert neighbor_lagrangian_gradient(self.problem, 1, 2, point)[0] == pytest.approx(-0.3 * 1.2)
        # L_2 = (x2 - 2)² + μ2(-1.5 + x1 x2): ∂/∂x1 = μ2 x2
        assert neighbor_lagrangian_gradient(self.problem, 2, 1, point)[0] == pytest.approx(0.6 * 0.7)

    def test_neighbor_gradient_requires_an_edge(self):
        with pytest.raises(GraphError):
            neighbor_lagrangian_gradient(self.problem, 1, 1, self.problem.zeros())

    def test_dimension_mismatch(self):
        other = example31(a=0.5).zeros()
        with pytest.raises(DimensionError):
            central_kkt_residual(self.problem, other)

    @pytest.mark.parametrize("a, expected", [(0.5, 0.0), (4.0, 0.0)])
    def test_example31_solution_is_origin(self, a, expected):
        problem = example31(a=a, with_g2=True)
        p_star = solve_central(problem)
        np.testing.assert_allclose(p_star.vector, expected, atol=1e-8)


class TestLoggingSettings:
    """Log directory and level come from the settings"""

    def teardown_method(self):
        configure_logging(settings.LOG_DIR, settings.LOG_LEVEL)

    def test_file_sinks_follow_the_log_directory(self, tmp_path):
        configure_logging(str(tmp_path), "warning")
        get_logger_loguru("sbdp_plus.tests.relocated", "relocated.log")
        assert (tmp_path / "relocated.log").exists()
        assert (tmp_path / "sbdp.log").exists()

    def test_log_level_is_validated(self):
        assert Settings(LOG_LEVEL="debug").LOG_LEVEL == "DEBUG"
        with pytest.raises(ValueError):
            Settings(LOG_LEVEL="chatty")
