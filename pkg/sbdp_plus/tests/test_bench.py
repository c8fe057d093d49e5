import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from sbdp_plus.bench.admm import admm_logreg_baseline, admm_penalty_sweep
from sbdp_plus.bench.catalog import build_problem, build_target, catalog
from sbdp_plus.bench.logreg import gen_logreg
from sbdp_plus.bench.scenario import load_scenario, run_scenario
from sbdp_plus.bench.trace_csv import COLUMNS, write_admm_csv
from sbdp_plus.errors import ConfigurationError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.run import cli

logger = get_logger_loguru(__name__)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


def write_scenario(path: Path, **fields) -> Path:
    path.write_text(yaml.safe_dump(fields), encoding="utf-8")
    return path


class TestCatalog:
    def test_names(self):
        assert set(catalog()) == {"example31", "example51", "nlp61", "logreg"}

    def test_schema_lists_parameters(self):
        schema = catalog()["logreg"].schema()
        assert set(schema) == {"m", "n", "agents", "seed", "eps_reg", "box"}
        assert schema["m"].startswith("int = 200")
        assert catalog()["nlp61"].schema() == {}

    def test_parameters_reach_the_builder(self):
        problem = build_problem("example31", a=2.0, with_g2=True)
        assert problem.n_g == 2
        assert "a=2" in problem.name

    def test_logreg_returns_instance(self):
        problem, instance = build_target("logreg", m=8, n=4, agents=2)
        assert instance is not None and instance.problem is problem
        assert build_target("nlp61")[1] is None

    def test_unknown_problem(self):
        with pytest.raises(ConfigurationError, match="unknown problem"):
            build_problem("rosenbrock")

    def test_unknown_parameter(self):
        with pytest.raises(ConfigurationError):
            build_problem("nlp61", a=1.0)


class TestLogRegGenerator:
    """Seeded feature-split logistic regression instances"""

    def test_same_seed_same_instance(self):
        first, second = gen_logreg(m=30, n=6, agents=3, seed=5), gen_logreg(m=30, n=6, agents=3, seed=5)
        np.testing.assert_array_equal(first.A, second.A)
        np.testing.assert_array_equal(first.b, second.b)
        assert not np.array_equal(first.A, gen_logreg(m=30, n=6, agents=3, seed=6).A)

    def test_layout(self):
        instance = gen_logreg(m=30, n=6, agents=3, seed=5)
        problem = instance.problem
        assert problem.ids == [1, 2, 3]
        assert (problem.n, problem.n_h, problem.n_g) == (6, 12, 0)
        assert set(np.unique(instance.b)) <= {-1.0, 1.0}
        assert instance.blocks()[2] == slice(2, 4)

    def test_single_agent(self):
        problem = gen_logreg(m=4, n=2, agents=1).problem
        assert problem.ids == [1]
        assert problem.p == 2 + 4

    @pytest.mark.parametrize("params", [
        {"n": 10, "agents": 3},
        {"m": 0},
        {"box": 0.0},
        {"eps_reg": -1.0},
    ])
    def test_invalid(self, params):
        with pytest.raises(ConfigurationError):
            gen_logreg(**params)


class TestAdmm:
    """Feature-split ADMM on a small instance"""

    def setup_method(self):
        self.instance = gen_logreg(m=40, n=4, agents=2, seed=2)

    def test_error_shrinks(self):
        trace = admm_logreg_baseline(self.instance, penalty=0.1, tol=1e-6, max_iter=300)
        assert trace.iterations >= 1
        assert trace.final_error < trace.errors[0]
        assert np.all(np.abs(trace.x) <= self.instance.box + 1e-9)

    def test_penalty_must_be_positive(self):
        with pytest.raises(ValueError):
            admm_logreg_baseline(self.instance, penalty=0.0)

    def test_penalty_sweep(self):
        results = admm_penalty_sweep(self.instance, penalties=(0.05, 0.5), max_iter=50)
        assert set(results) == {0.05, 0.5}
        assert all(value >= 0 for value in results.values())

    def test_csv(self, tmp_path):
        path = write_admm_csv(tmp_path / "admm.csv", [0.5, 0.25])
        assert path.read_text(encoding="utf-8") == "iter,err_x\n1,5.000000000000e-01\n2,2.500000000000e-01\n"


class TestScenario:
    """Scenario files through the full pipeline"""

    def test_shipped_scenarios_load(self):
        for path in sorted(CONFIG_DIR.glob("*.yaml")):
            scenario = load_scenario(path)
            assert scenario.name == path.stem
            build_target(scenario.problem, **scenario.problem_params())

    def test_nlp61_converges(self, tmp_path):
        result = run_scenario(CONFIG_DIR / "nlp61_default.yaml", {"out_dir": str(tmp_path)})
        assert result.exit_code == 0, result.status
        assert set(result.artifacts) == {"certificate", "trace", "messages"}
        assert result.basin_certified
        lines = result.artifacts["trace"].read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(COLUMNS)
        assert len(lines) == result.trace.iterations + 1
        first = dict(zip(COLUMNS, lines[1].split(",")))
        assert first["iter"] == "1"
        assert first["comm_floats"] == "4"
        assert "C " in result.artifacts["certificate"].read_text(encoding="utf-8")

    def test_zero_iterations_writes_header_only(self, tmp_path):
        result = run_scenario(CONFIG_DIR / "nlp61_default.yaml", {"out_dir": str(tmp_path), "max_iter": 0})
        assert result.status == "max_iter"
        assert result.exit_code == 2
        assert result.artifacts["trace"].read_text(encoding="utf-8") == ",".join(COLUMNS) + "\n"

    def test_identical_runs_give_identical_bytes(self, tmp_path):
        path = write_scenario(
            tmp_path / "repeat.yaml",
            problem="nlp61", alpha=0.35, beta=2.0, max_iter=15, p0=[1.4, 1.4, 0.0, 0.0],
            wall_time=False, message_log=True,
        )
        first = run_scenario(path, {"out_dir": str(tmp_path / "first")})
        second = run_scenario(path, {"out_dir": str(tmp_path / "second")})
        for kind in ("trace", "messages"):
            assert first.artifacts[kind].read_bytes() == second.artifacts[kind].read_bytes()
        assert ",," not in first.artifacts["trace"].read_text(encoding="utf-8").splitlines()[1]

    def test_wall_time_column_empty_when_disabled(self, tmp_path):
        path = write_scenario(tmp_path / "quiet.yaml", problem="nlp61", alpha=0.35, beta=2.0, max_iter=2,
                              p0=[1.4, 1.4, 0.0, 0.0], wall_time=False, analyze=False)
        result = run_scenario(path, {"out_dir": str(tmp_path)})
        row = result.artifacts["trace"].read_text(encoding="utf-8").splitlines()[1].split(",")
        assert row[COLUMNS.index("wall_ms")] == ""
        assert row[COLUMNS.index("errP")] == ""

    def test_overrides_replace_file_values(self, tmp_path):
        scenario = load_scenario(CONFIG_DIR / "nlp61_default.yaml", {"alpha": 0.2, "beta": None})
        assert scenario.alpha == 0.2
        assert scenario.beta == 2.0

    def test_tuned_step_sizes(self, tmp_path):
        path = write_scenario(tmp_path / "tuned.yaml", problem="nlp61", max_iter=20,
                              p0=[1.4, 1.4, 0.0, 0.0], analyze=False)
        result = run_scenario(path, {"out_dir": str(tmp_path)})
        assert result.config.beta == pytest.approx(1.19, abs=0.01)
        assert 0 < result.config.alpha < 1
        assert result.status in ("converged", "max_iter")

    def test_unknown_key(self, tmp_path):
        path = write_scenario(tmp_path / "typo.yaml", problem="nlp61", alpha_typo=0.3)
        with pytest.raises(ConfigurationError, match="alpha_typo"):
            load_scenario(path)

    def test_yaml_syntax_error_names_the_line(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("problem: nlp61\nalpha: 0.35\np0: [1.4, 1.4\nbeta: 2.0\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match=r"line \d+"):
            load_scenario(path)

    def test_validation_errors_name_the_line(self, tmp_path):
        path = tmp_path / "typed.yaml"
        path.write_text("problem: nlp61\nalpha: 0.35\nmax_iter: many\nalpha_typo: 0.3\n", encoding="utf-8")
        with pytest.raises(ConfigurationError) as info:
            load_scenario(path)
        message = str(info.value)
        assert "line 3: max_iter" in message
        assert "line 4: alpha_typo" in message

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- nlp61\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_scenario(path)

    def test_initial_point_of_wrong_length(self, tmp_path):
        path = write_scenario(tmp_path / "short.yaml", problem="nlp61", alpha=0.35, beta=2.0, p0=[1.0])
        with pytest.raises(ConfigurationError, match="p0"):
            run_scenario(path, {"out_dir": str(tmp_path)})

    def test_plain_update_on_indefinite_problem_has_no_step(self, tmp_path):
        path = write_scenario(tmp_path / "nostep.yaml", problem="example51", beta=0.1)
        with pytest.raises(ConfigurationError, match="no admissible step size"):
            run_scenario(path, {"out_dir": str(tmp_path)})


class TestCli:
    """Command-line surface"""

    def setup_method(self):
        self.runner = CliRunner()

    def test_catalog(self):
        result = self.runner.invoke(cli, ["catalog"])
        assert result.exit_code == 0
        assert "nlp61" in result.output
        assert "eps_reg" in result.output

    def test_run_converged(self, tmp_path):
        result = self.runner.invoke(cli, ["run", str(CONFIG_DIR / "nlp61_default.yaml"), "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "status: converged" in result.output
        assert (tmp_path / "nlp61_default.csv").exists()

    def test_run_iteration_cap(self, tmp_path):
        result = self.runner.invoke(
            cli, ["run", str(CONFIG_DIR / "nlp61_default.yaml"), "--out", str(tmp_path), "--max-iter", "3"]
        )
        assert result.exit_code == 2

    def test_run_bad_scenario(self, tmp_path):
        path = write_scenario(tmp_path / "bad.yaml", problem="rosenbrock")
        result = self.runner.invoke(cli, ["run", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 1

    def test_analyze(self, tmp_path):
        scenario = shutil.copy(CONFIG_DIR / "nlp61_default.yaml", tmp_path / "nlp61.yaml")
        result = self.runner.invoke(cli, ["analyze", str(scenario), "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "alpha_bar" in result.output
        assert (tmp_path / "nlp61.certificate.txt").exists()

    def test_audit(self):
        result = self.runner.invoke(cli, ["audit", str(CONFIG_DIR / "nlp61_default.yaml")])
        assert result.exit_code == 0, result.output
        assert "FAIL" not in result.output
