import sys
from pathlib import Path

import click

from sbdp_plus.bench.catalog import build_target, catalog
from sbdp_plus.bench.scenario import analyze_scenario, initial_point, load_scenario, run_scenario
from sbdp_plus.core.audit import finite_difference_audit
from sbdp_plus.errors import SbdpError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import Variant

logger = get_logger_loguru(__name__)

CONFIG_ERROR_EXIT = 1


def engine_options(command):
    """Options overriding the scenario file."""
    options = [
        click.option("--seed", type=int, default=None, help="Seed of the generated instance (logreg)"),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory"),
        click.option("--max-iter", type=click.IntRange(min=0), default=None, help="Iteration cap"),
        click.option("--variant", type=click.Choice([v.value for v in Variant]), default=None, help="Update rule"),
        click.option("--alpha", type=float, default=None, help="Primal-dual step size in (0, 1)"),
        click.option("--beta", type=float, default=None, help="Dual step size"),
        click.option("--rho", type=float, default=None, help="Proximal penalty"),
        click.option("--gamma", type=float, default=None, help="SOSC correction penalty"),
        click.option("--eps", "epsilon", type=float, default=None, help="Stopping tolerance on max ‖s_i‖∞"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _fail(error: Exception) -> None:
    logger.error(str(error))
    sys.exit(CONFIG_ERROR_EXIT)


@click.group()
def cli():
    pass


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@engine_options
def run(scenario, **overrides):
    """Run a scenario: engine, certificate, CSV trace. Exit 0 converged, 2 not converged, 3 solver error."""
    try:
        result = run_scenario(Path(scenario), overrides)
    except SbdpError as e:
        _fail(e)
    for kind, path in result.artifacts.items():
        click.echo(f"{kind}: {path}")
    click.echo(f"status: {result.status}")
    sys.exit(result.exit_code)


@cli.command(name="catalog")
def list_catalog():
    """List the built-in problems and their parameters."""
    for name, entry in catalog().items():
        click.echo(f"{name}: {entry.description}")
        for key, schema in entry.schema().items():
            click.echo(f"    {key}: {schema}")


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@engine_options
def analyze(scenario, **overrides):
    """Print the rate certificate at the centralized solution without running the engine."""
    out_dir = overrides.pop("out_dir")
    try:
        certificate = analyze_scenario(load_scenario(Path(scenario), overrides), out_dir)
    except SbdpError as e:
        _fail(e)
    click.echo(certificate.report(), nl=False)


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--step", type=float, default=1e-5, show_default=True, help="Relative difference step")
@click.option("--threshold", type=float, default=1e-4, show_default=True, help="Largest accepted relative error")
def audit(scenario, step, threshold):
    """Compare the derivative oracles of a scenario's problem with finite differences at p0."""
    try:
        loaded = load_scenario(Path(scenario))
        problem, _ = build_target(loaded.problem, **loaded.problem_params())
        report = finite_difference_audit(problem, initial_point(problem, loaded), step, threshold)
    except SbdpError as e:
        _fail(e)
    for entry in report.entries:
        click.echo(f"agent {entry.agent_id:<4}{entry.oracle:<22}{entry.max_rel_error:>12.3e}  {'ok' if entry.passed else 'FAIL'}")
    sys.exit(0 if report.passed else CONFIG_ERROR_EXIT)


if __name__ == "__main__":
    cli()
