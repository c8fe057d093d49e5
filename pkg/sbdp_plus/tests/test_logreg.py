from pathlib import Path

import numpy as np
import pytest

from sbdp_plus.bench.admm import admm_logreg_baseline
from sbdp_plus.bench.catalog import build_target
from sbdp_plus.bench.scenario import engine_config, initial_point, load_scenario, step_bound
from sbdp_plus.engine.runner import run
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import Variant
from sbdp_plus.solvers.central import solve_central

logger = get_logger_loguru(__name__)

pytestmark = pytest.mark.slow

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


class TestLogRegBenchmark:
    """m = 200 samples, n = 100 features over 10 agents"""

    @classmethod
    def setup_class(cls):
        cls.scenario = load_scenario(CONFIG_DIR / "logreg_default.yaml")
        cls.problem, cls.instance = build_target(cls.scenario.problem, **cls.scenario.problem_params())
        cls.p_star = solve_central(cls.problem)
        cls.x_star = cls.p_star.x

    def test_step_size_is_certified(self):
        bound = step_bound(self.problem, self.p_star, Variant.SBDP_PLUS_IDENTITY, 1.0, 0.0, self.scenario.rho)
        config = engine_config(self.problem, self.p_star, self.scenario)
        logger.info(f"logreg: step bound {bound:.4g}, alpha {config.alpha:.4g}")
        assert 0 < config.alpha < bound
        # each local model carries 1/M of the shared loss curvature
        assert bound < 0.85

    def test_identity_mixing_reaches_the_central_solution(self):
        config = engine_config(self.problem, self.p_star, self.scenario)
        trace = run(self.problem, config, initial_point(self.problem, self.scenario))
        error = np.linalg.norm(trace.final_point.x - self.x_star)
        logger.info(f"logreg: {trace.status} after {trace.iterations} iterations, error {error:.3e}")
        assert error <= 1e-5
        assert all(record.comm_floats == 1800 for record in trace.records)
        assert all(record.budget.ok for record in trace.records)

    def test_admm_reaches_the_central_solution(self):
        trace = admm_logreg_baseline(self.instance, penalty=0.1, tol=1e-6, max_iter=3000, x_star=self.x_star)
        logger.info(f"ADMM: {trace.iterations} iterations, error {trace.final_error:.3e}")
        assert trace.final_error <= 1e-5
