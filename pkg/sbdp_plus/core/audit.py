import numpy as np

from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import AuditEntry, AuditReport
from sbdp_plus.utils import fd_jacobian, relative_error

logger = get_logger_loguru(__name__)


def finite_difference_audit(
    problem: ProblemGraph, point: PrimalDualPoint, h: float = 1e-5, threshold: float = 1e-4
) -> AuditReport:
    """
    Compare every derivative oracle against central differences of the
    next-lower oracle (gradient vs. objective, Hessian vs. gradient, ...).

    Args:
        problem: problem whose oracles are audited
        point: point at which the local vectors are taken
        h: relative difference step, scaled by (1+|z|)
        threshold: relative error above which an entry fails

    Returns:
        AuditReport: one entry per agent and oracle
    """
    if h <= 0:
        raise ValueError(f"difference step must be positive, got {h}")

    report = AuditReport(step=h, threshold=threshold)
    for i, agent in problem.agents.items():
        z = problem.local_vector(i, point.x)
        pairs = [
            ("objective_gradient", agent.objective_gradient(z),
             fd_jacobian(lambda v: np.array([agent.objective(v)]), z, h)[0]),
            ("objective_hessian", agent.objective_hessian(z), fd_jacobian(agent.objective_gradient, z, h)),
        ]
        if agent.n_g:
            pairs.append(("eq_jacobian", agent.eq_jacobian(z), fd_jacobian(agent.eq, z, h)))
            pairs.append(("eq_hessians", agent.eq_hessians(z), _component_fd(agent.eq_jacobian, agent.n_g, z, h)))
        if agent.n_h:
            pairs.append(("ineq_jacobian", agent.ineq_jacobian(z), fd_jacobian(agent.ineq, z, h)))
            pairs.append(("ineq_hessians", agent.ineq_hessians(z), _component_fd(agent.ineq_jacobian, agent.n_h, z, h)))

        for oracle, supplied, approx in pairs:
            error = relative_error(np.asarray(approx, dtype=float), np.asarray(supplied, dtype=float))
            report.entries.append(
                AuditEntry(agent_id=i, oracle=oracle, max_rel_error=error, passed=error <= threshold)
            )

    for entry in report.failures():
        logger.warning(f"Derivative audit: agent {entry.agent_id} {entry.oracle} error {entry.max_rel_error:.3e}")
    logger.info(f"Derivative audit of {problem.name}: max error {report.max_error:.3e}")
    return report


def _component_fd(jacobian, count: int, z: np.ndarray, h: float) -> np.ndarray:
    flat = fd_jacobian(lambda v: np.asarray(jacobian(v), dtype=float).reshape(-1), z, h)
    return flat.reshape(count, z.shape[0], z.shape[0])
