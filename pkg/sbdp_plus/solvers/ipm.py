"""Small dense primal-dual interior-point method for smooth NLPs.

Solves  min f(s)  s.t.  g(s) = 0,  h(s) ≤ 0  with slacks w ≥ 0 for the
inequalities.  Models plug in through ``NlpModel``.
"""

from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np
import scipy.linalg

from sbdp_plus.errors import LocalInfeasibleError, LocalSolverError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.utils import max_norm

logger = get_logger_loguru(__name__)


@dataclass
class NlpValues:
    f: float
    grad: np.ndarray
    g: np.ndarray
    jac_g: np.ndarray
    h: np.ndarray
    jac_h: np.ndarray


class NlpModel(Protocol):
    n: int
    n_g: int
    n_h: int

    def values(self, s: np.ndarray) -> NlpValues: ...

    def hessian(self, s: np.ndarray, nu: np.ndarray, kappa: np.ndarray) -> np.ndarray: ...


@dataclass
class IpmOptions:
    """Interior-point parameters."""
    tol: float = 1e-10
    max_iter: int = 100
    barrier_init: float = 0.1
    barrier_warm: float = 1e-4
    barrier_factor: float = 0.2
    barrier_power: float = 1.5
    fraction_to_boundary: float = 0.995
    armijo: float = 1e-4
    max_backtracks: int = 40
    min_curvature: float = 1e-8
    slack_floor: float = 1e-2
    stall_window: int = 10


@dataclass
class IpmResult:
    s: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    residual: float
    iterations: int
    barrier: float


def kkt_residual(values: NlpValues, nu: np.ndarray, kappa: np.ndarray) -> float:
    """Max-norm KKT residual: stationarity, feasibility, dual sign, complementarity."""
    stationarity = values.grad + values.jac_g.T @ nu + values.jac_h.T @ kappa
    return max_norm(
        stationarity,
        values.g,
        np.maximum(values.h, 0.0),
        np.minimum(kappa, 0.0),
        kappa * values.h,
    )


class InteriorPointSolver:
    """
    Primal-dual interior-point method with slacks, fraction-to-boundary rule,
    inertia correction of the reduced Hessian and Armijo backtracking on the
    barrier KKT residual.
    """

    def __init__(self, options: Optional[IpmOptions] = None):
        self.options = options or IpmOptions()

    def solve(
        self,
        model: NlpModel,
        s0: np.ndarray,
        nu0: Optional[np.ndarray] = None,
        kappa0: Optional[np.ndarray] = None,
        label: str = "nlp",
    ) -> IpmResult:
        """
        Args:
            model: problem callbacks
            s0: primal start
            nu0, kappa0: multiplier warm start; a given kappa0 also lowers the
                initial barrier parameter
            label: name used in log and error messages

        Returns:
            IpmResult: primal-dual solution with residual ≤ tol

        Raises:
            LocalInfeasibleError: primal infeasibility stalls above tol·1e3
            LocalSolverError: iteration limit reached, carrying the best iterate
        """
        opts = self.options
        s = np.array(s0, dtype=float)
        vals = model.values(s)
        # reused multipliers need a start inside h ≤ 0
        warm = kappa0 is not None and model.n_h > 0 and bool(np.all(vals.h <= 0.0))

        barrier = opts.barrier_warm if warm else opts.barrier_init
        barrier_floor = opts.tol / 10.0
        w = np.maximum(-vals.h, np.sqrt(barrier) if warm else opts.slack_floor)
        nu = np.zeros(model.n_g) if nu0 is None else np.array(nu0, dtype=float)
        kappa = barrier / w if not warm else np.maximum(np.asarray(kappa0, dtype=float), barrier / w)

        best: Optional[IpmResult] = None
        infeasibility: List[float] = []

        for iteration in range(opts.max_iter + 1):
            residual = kkt_residual(vals, nu, kappa)
            if best is None or residual < best.residual:
                best = IpmResult(s.copy(), nu.copy(), kappa.copy(), residual, iteration, barrier)
            if residual <= opts.tol:
                return IpmResult(s, nu, kappa, residual, iteration, barrier)
            if iteration == opts.max_iter:
                break

            infeasibility.append(max_norm(vals.g, np.maximum(vals.h, 0.0)))
            self._check_stall(infeasibility, label, best)

            while (
                model.n_h > 0
                and barrier > barrier_floor
                and self._barrier_error(vals, w, nu, kappa, barrier) <= 10.0 * barrier
            ):
                barrier = max(barrier_floor, min(opts.barrier_factor * barrier, barrier ** opts.barrier_power))

            ds, dw, dnu, dkappa = self._newton_step(model, s, w, nu, kappa, vals, barrier)

            step_p = self._max_step(w, dw)
            step_d = self._max_step(kappa, dkappa)
            merit = self._merit(vals, w, nu, kappa, barrier)
            t = 1.0
            for _ in range(opts.max_backtracks):
                s_new = s + t * step_p * ds
                w_new = w + t * step_p * dw
                nu_new = nu + t * step_p * dnu
                kappa_new = kappa + t * step_d * dkappa
                vals_new = model.values(s_new)
                if self._merit(vals_new, w_new, nu_new, kappa_new, barrier) <= (1.0 - opts.armijo * t) * merit:
                    break
                t *= 0.5
            else:
                logger.debug(f"{label}: line search exhausted at iteration {iteration}, taking the short step")

            s, w, nu, kappa, vals = s_new, w_new, nu_new, kappa_new, vals_new

        raise LocalSolverError(
            f"{label}: no convergence within {opts.max_iter} iterations (best residual {best.residual:.3e})",
            best=best,
        )

    # --- internals ---

    def _check_stall(self, history: List[float], label: str, best: IpmResult) -> None:
        window = self.options.stall_window
        if len(history) <= 2 * window:
            return
        current, before = history[-1], history[-1 - window]
        if current > self.options.tol * 1e3 and current > 0.99 * before:
            raise LocalInfeasibleError(
                f"{label}: primal infeasibility stalled at {current:.3e}", best=best
            )

    @staticmethod
    def _residual_parts(vals: NlpValues, w, nu, kappa, barrier):
        stationarity = vals.grad + vals.jac_g.T @ nu + vals.jac_h.T @ kappa
        return stationarity, vals.g, vals.h + w, w * kappa - barrier

    def _barrier_error(self, vals, w, nu, kappa, barrier) -> float:
        return max_norm(*self._residual_parts(vals, w, nu, kappa, barrier))

    def _merit(self, vals, w, nu, kappa, barrier) -> float:
        return float(np.sqrt(sum(float(part @ part) for part in self._residual_parts(vals, w, nu, kappa, barrier))))

    def _max_step(self, value: np.ndarray, delta: np.ndarray) -> float:
        decreasing = delta < 0
        if not np.any(decreasing):
            return 1.0
        tau = self.options.fraction_to_boundary
        return float(min(1.0, np.min(-tau * value[decreasing] / delta[decreasing])))

    def _newton_step(self, model: NlpModel, s, w, nu, kappa, vals: NlpValues, barrier):
        n, n_g = model.n, model.n_g
        stationarity, r_eq, r_in, r_comp = self._residual_parts(vals, w, nu, kappa, barrier)
        hessian = np.asarray(model.hessian(s, nu, kappa), dtype=float)

        if model.n_h:
            sigma = kappa / w
            condensed = hessian + vals.jac_h.T @ (sigma[:, None] * vals.jac_h)
            rhs_s = -stationarity - vals.jac_h.T @ ((-r_comp + kappa * r_in) / w)
        else:
            condensed = hessian
            rhs_s = -stationarity

        condensed = condensed + self._inertia_shift(condensed, vals.jac_g) * np.eye(n)
        kkt = np.block([[condensed, vals.jac_g.T], [vals.jac_g, np.zeros((n_g, n_g))]])
        rhs = np.concatenate([rhs_s, -r_eq])
        try:
            step = scipy.linalg.solve(kkt, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            regularized = kkt.copy()
            regularized[n:, n:] -= 1e-10 * np.eye(n_g)
            step = scipy.linalg.lstsq(regularized, rhs)[0]

        ds, dnu = step[:n], step[n:]
        if model.n_h:
            dw = -r_in - vals.jac_h @ ds
            dkappa = (-r_comp - kappa * dw) / w
        else:
            dw = dkappa = np.zeros(0)
        return ds, dw, dnu, dkappa

    def _inertia_shift(self, condensed: np.ndarray, jac_g: np.ndarray) -> float:
        """Shift σ ≥ 0 such that the Hessian on the null space of jac_g has λ_min ≥ min_curvature."""
        if condensed.shape[0] == 0:
            return 0.0
        if jac_g.shape[0]:
            basis = scipy.linalg.null_space(jac_g)
            if basis.shape[1] == 0:
                return 0.0
            reduced = basis.T @ condensed @ basis
        else:
            reduced = condensed
        smallest = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])
        return max(0.0, self.options.min_curvature - smallest)
