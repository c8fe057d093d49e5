"""ADMM baseline for feature-split logistic regression (sharing form).

Per iteration every agent solves a box-constrained least-squares problem in
x_i, a central step updates the averaged shared variable z̄ and the scaled
dual u, and the error to the centralized solution is recorded.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear
from scipy.special import expit

from sbdp_plus.bench.logreg import LogRegInstance
from sbdp_plus.errors import DivergenceError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.solvers.central import solve_central

logger = get_logger_loguru(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass
class AdmmTrace:
    penalty: float
    errors: List[float] = field(default_factory=list)
    x: Optional[np.ndarray] = None
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.errors)

    @property
    def final_error(self) -> float:
        return self.errors[-1] if self.errors else float("inf")


def _shared_update(v: np.ndarray, shares: int, m: int, penalty: float, newton_steps: int = 50) -> np.ndarray:
    """Componentwise argmin of (1/m)log(1 + exp(-N z)) + (Nρ/2)(z - v)², N = shares."""
    z = v.copy()
    for _ in range(newton_steps):
        t = shares * z
        slope = -(shares / m) * expit(-t) + shares * penalty * (z - v)
        curvature = (shares ** 2 / m) * expit(t) * expit(-t) + shares * penalty
        step = slope / curvature
        z -= step
        if np.max(np.abs(step)) < 1e-14:
            break
    return z


def admm_logreg_baseline(
    instance: LogRegInstance,
    penalty: float = 0.1,
    tol: float = 1e-6,
    max_iter: int = 3000,
    x_star: Optional[np.ndarray] = None,
) -> AdmmTrace:
    """
    Run ADMM split across features and record ‖x^q - x*‖ against the centralized oracle.

    Args:
        instance: logistic regression instance
        penalty: ADMM penalty parameter
        tol: stop once the error is at most tol
        max_iter: iteration cap
        x_star: centralized solution, solved here when omitted

    Raises:
        DivergenceError: the error exceeds 1e6
    """
    if not penalty > 0:
        raise ValueError(f"penalty must be positive, got {penalty}")
    if x_star is None:
        x_star = solve_central(instance.problem).x

    shares, m = instance.agents, instance.m
    D = instance.b[:, None] * instance.A
    blocks = instance.blocks()
    root_penalty, root_reg = np.sqrt(penalty), np.sqrt(instance.eps_reg)
    systems = {
        i: np.vstack([root_penalty * D[:, cols], root_reg * np.eye(cols.stop - cols.start)])
        for i, cols in blocks.items()
    }

    x = np.zeros(instance.n)
    products = {i: np.zeros(m) for i in blocks}
    z_bar = np.zeros(m)
    u = np.zeros(m)
    trace = AdmmTrace(penalty=penalty)

    for q in range(max_iter):
        average = sum(products.values()) / shares
        for i, cols in blocks.items():
            target = products[i] - average + z_bar - u
            rhs = np.concatenate([root_penalty * target, np.zeros(cols.stop - cols.start)])
            result = lsq_linear(systems[i], rhs, bounds=(-instance.box, instance.box), method="bvls", tol=1e-12)
            x[cols] = result.x
            products[i] = D[:, cols] @ result.x

        # central step
        average = sum(products.values()) / shares
        z_bar = _shared_update(average + u, shares, m, penalty)
        u = u + average - z_bar

        error = float(np.linalg.norm(x - x_star))
        trace.errors.append(error)
        if not np.isfinite(error) or error > DIVERGENCE_LIMIT:
            raise DivergenceError(f"ADMM with penalty {penalty:g} diverged at iteration {q} (error {error:.3e})")
        if error <= tol:
            trace.converged = True
            break

    trace.x = x.copy()
    logger.info(
        f"ADMM penalty={penalty:g}: {'converged' if trace.converged else 'stopped'} after "
        f"{trace.iterations} iterations, error {trace.final_error:.3e}"
    )
    return trace


def admm_penalty_sweep(
    instance: LogRegInstance,
    penalties: Sequence[float] = (0.01, 0.1, 1.0),
    tol: float = 1e-6,
    max_iter: int = 3000,
    x_star: Optional[np.ndarray] = None,
) -> Dict[float, float]:
    """Final error per penalty; diverging penalties map to inf."""
    if x_star is None:
        x_star = solve_central(instance.problem).x
    results = {}
    for penalty in penalties:
        try:
            results[penalty] = admm_logreg_baseline(instance, penalty, tol, max_iter, x_star).final_error
        except DivergenceError as e:
            logger.warning(str(e))
            results[penalty] = float("inf")
    return results
