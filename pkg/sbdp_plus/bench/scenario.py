"""Scenario pipeline: build the problem, tune, run, certify and write artifacts."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import scipy.linalg

from sbdp_plus.analysis.certify import certify, certify_basin
from sbdp_plus.analysis.matrices import assemble_A, assemble_M_N_D
from sbdp_plus.analysis.tuning import max_step_size, tune_beta
from sbdp_plus.bench.admm import AdmmTrace, admm_logreg_baseline
from sbdp_plus.bench.catalog import build_target
from sbdp_plus.bench.trace_csv import trace_rows, write_admm_csv, write_trace_csv
from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.engine.runner import IterationTrace, run
from sbdp_plus.errors import AnalysisError, ConfigurationError, DimensionError, LocalSolverError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import EngineConfig, RateCertificate, RunStatus, Scenario, Variant
from sbdp_plus.settings import settings
from sbdp_plus.solvers.central import solve_central

logger = get_logger_loguru(__name__)

EXIT_CODES: Dict[RunStatus, int] = {"converged": 0, "max_iter": 2, "diverged": 2, "solver_error": 3}


@dataclass
class ScenarioResult:
    scenario: Scenario
    status: RunStatus
    config: Optional[EngineConfig] = None
    p_star: Optional[PrimalDualPoint] = None
    trace: Optional[IterationTrace] = None
    certificate: Optional[RateCertificate] = None
    basin_certified: Optional[bool] = None
    admm: Optional[AdmmTrace] = None
    artifacts: Dict[str, Path] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]


def load_scenario(path: Path, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """Read a scenario file and apply command-line overrides (None values are ignored)."""
    scenario = Scenario.from_file(path)
    updates = {key: value for key, value in (overrides or {}).items() if value is not None}
    if not updates:
        return scenario
    try:
        return Scenario(**{**scenario.model_dump(), **updates})
    except ValueError as e:
        raise ConfigurationError(f"{path}: {e}") from e


def initial_point(problem: ProblemGraph, scenario: Scenario) -> PrimalDualPoint:
    if scenario.p0 is None:
        return problem.zeros()
    try:
        return problem.point_from_vector(np.asarray(scenario.p0, dtype=float))
    except DimensionError as e:
        raise ConfigurationError(f"p0 of length {len(scenario.p0)} does not fit {problem.name} (p={problem.p})") from e


def step_bound(problem: ProblemGraph, p_star: PrimalDualPoint, variant: Variant, beta: float, gamma: float, rho: float) -> float:
    """Largest admissible α of the linearized iteration at p*."""
    if variant.uses_mixing:
        return max_step_size(assemble_A(problem, p_star, beta, gamma, variant))
    M, N, _ = assemble_M_N_D(problem, p_star, rho)
    return max_step_size(scipy.linalg.solve(M, N))


def engine_config(problem: ProblemGraph, p_star: PrimalDualPoint, scenario: Scenario) -> EngineConfig:
    """
    Engine configuration of a scenario. An empty ``beta`` is tuned at p*;
    an empty ``alpha`` becomes ``alpha_safety`` times the step bound.

    Raises:
        ConfigurationError: no admissible step size exists
    """
    variant = scenario.variant
    beta = scenario.beta
    if beta is None:
        beta = tune_beta(problem, p_star, gamma=scenario.gamma) if variant.uses_mixing else settings.DEFAULT_BETA

    alpha = scenario.alpha
    if alpha is None:
        if variant is Variant.SBDP_BASELINE:
            alpha = 0.5
        else:
            bound = step_bound(problem, p_star, variant, beta, scenario.gamma, scenario.rho)
            if bound <= 0:
                raise ConfigurationError(
                    f"{problem.name}: no admissible step size for {variant.value} (beta={beta:.4g}, gamma={scenario.gamma:.4g})"
                )
            alpha = min(scenario.alpha_safety * bound, 0.999)
            logger.info(f"{problem.name}: step bound {bound:.4g}, using alpha={alpha:.4g}")
    try:
        return scenario.engine_config(alpha, beta)
    except ValueError as e:
        raise ConfigurationError(f"{scenario.name}: {e}") from e


def analyze_scenario(scenario: Scenario, out_dir: Optional[Path] = None) -> RateCertificate:
    """Certificate at the centralized solution without running the engine."""
    problem, _ = build_target(scenario.problem, **scenario.problem_params())
    p_star = solve_central(problem)
    config = engine_config(problem, p_star, scenario)
    certificate = certify(problem, p_star, config, scenario.q_weight)
    if out_dir is not None:
        certificate.write(Path(out_dir) / f"{scenario.name}.certificate.txt")
    return certificate


def run_scenario(path: Path, overrides: Optional[Dict[str, Any]] = None) -> ScenarioResult:
    """
    Execute a scenario file end to end.

    Writes ``<name>.csv`` and, depending on the toggles, ``<name>.certificate.txt``,
    ``<name>.messages.tsv`` and ``<name>.admm.csv`` into the output directory.
    The result's ``exit_code`` is 0 on convergence, 2 on max-iter or divergence
    and 3 on a local solver failure.

    Raises:
        ConfigurationError: unreadable scenario, unknown keys or problem, bad p0
    """
    overrides = dict(overrides or {})
    out = overrides.pop("out_dir", None)
    scenario = load_scenario(path, overrides)
    out_dir = Path(out or scenario.out_dir or settings.OUTPUT_DIR)

    problem, instance = build_target(scenario.problem, **scenario.problem_params())
    p0 = initial_point(problem, scenario)
    p_star = solve_central(problem)
    config = engine_config(problem, p_star, scenario)
    result = ScenarioResult(scenario=scenario, status="max_iter", config=config, p_star=p_star)

    if scenario.analyze:
        try:
            result.certificate = certify(problem, p_star, config, scenario.q_weight)
            path_cert = out_dir / f"{scenario.name}.certificate.txt"
            result.certificate.write(path_cert)
            result.artifacts["certificate"] = path_cert
        except AnalysisError as e:
            logger.warning(f"{scenario.name}: no rate certificate: {e}")

    try:
        trace = run(problem, config, p0)
    except LocalSolverError as e:
        logger.error(f"{scenario.name}: {e}")
        result.status = "solver_error"
        return result
    result.trace = trace
    result.status = trace.status

    rows = trace_rows(trace, p_star, result.certificate, wall_time=scenario.wall_time)
    result.artifacts["trace"] = write_trace_csv(out_dir / f"{scenario.name}.csv", rows)
    if scenario.message_log:
        result.artifacts["messages"] = trace.network.ledger.dump(out_dir / f"{scenario.name}.messages.tsv")

    if scenario.certify and result.certificate is not None and trace.records:
        result.basin_certified = certify_basin(problem, trace, result.certificate.P_bar, p_star)
        logger.info(f"{scenario.name}: basin {'certified' if result.basin_certified else 'not certified'}")

    if scenario.admm:
        if instance is None:
            logger.warning(f"{scenario.name}: the ADMM baseline needs a logistic regression instance, skipped")
        else:
            result.admm = admm_logreg_baseline(
                instance, scenario.admm_penalty, scenario.admm_tol, scenario.admm_max_iter, x_star=p_star.x
            )
            result.artifacts["admm"] = write_admm_csv(out_dir / f"{scenario.name}.admm.csv", result.admm.errors)

    final = f"final ‖s‖∞ {trace.records[-1].s_inf:.3e}" if trace.records else "no iterations"
    logger.info(f"{scenario.name}: {result.status} (exit {result.exit_code}), {final}")
    return result
