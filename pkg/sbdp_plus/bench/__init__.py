from .catalog import build_problem, catalog
from .logreg import gen_logreg
from .admm import admm_logreg_baseline, admm_penalty_sweep
from .scenario import run_scenario

__all__ = [
    "build_problem",
    "catalog",
    "gen_logreg",
    "admm_logreg_baseline",
    "admm_penalty_sweep",
    "run_scenario",
]
