"""Assumption checks, constructive basin certification and the rate certificate."""

from typing import FrozenSet, Mapping, Optional

import numpy as np
import scipy.linalg

from sbdp_plus.analysis.lyapunov import convergence_constants, solve_discrete_lyapunov
from sbdp_plus.analysis.matrices import (
    assemble_A,
    assemble_M_N_D,
    decoupled_rows,
    gdd_metric,
    grad_phi_closed_form,
    iteration_matrix,
    spectral_radius,
)
from sbdp_plus.analysis.tuning import max_step_size, min_gamma, min_rho
from sbdp_plus.core.kkt import central_kkt_residual
from sbdp_plus.core.problem import PrimalDualPoint, ProblemGraph
from sbdp_plus.errors import AnalysisError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import AssumptionCheck, AssumptionReport, EngineConfig, RateCertificate, Variant
from sbdp_plus.solvers.local_nlp import LocalSolution, assemble_local_nlp, solve_all_local

logger = get_logger_loguru(__name__)


def _smallest_singular(matrix: np.ndarray) -> float:
    if matrix.shape[0] == 0:
        return np.inf
    return float(np.linalg.svd(matrix, compute_uv=False)[-1]) if matrix.shape[0] <= matrix.shape[1] else 0.0


def _reduced_curvature(hessian: np.ndarray, constraints: np.ndarray) -> float:
    """λ_min of the Hessian on the null space of the constraint rows."""
    basis = scipy.linalg.null_space(constraints) if constraints.shape[0] else np.eye(hessian.shape[0])
    if basis.shape[1] == 0:
        return np.inf
    reduced = basis.T @ hessian @ basis
    return float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])


def active_constraints(problem: ProblemGraph, point: PrimalDualPoint, tau: float = 1e-6) -> FrozenSet[int]:
    """Global μ indices with μ_k > τ or |h_k(x)| ≤ τ."""
    h = problem.ineq(point.x)
    return frozenset(int(k) for k in np.flatnonzero((point.mu > tau) | (np.abs(h) <= tau)))


def check_assumptions(problem: ProblemGraph, point: PrimalDualPoint, rho: float = 0.0, tau: float = 1e-6) -> AssumptionReport:
    """
    Report-only check of the regularity assumptions at an approximate KKT point.

    Checks, each with its deciding margin as witness: strict complementarity,
    LICQ of the central and of every local active Jacobian, uniform SOSC,
    local convexity with ρ, SOSC and partial SOSC on the decoupled rows.
    """
    residual = central_kkt_residual(problem, point)
    if residual > 1e-6:
        logger.warning(f"{problem.name}: checking assumptions at a point with KKT residual {residual:.3e}")

    derivatives = problem.central_derivatives(point.x, point.lam, point.mu)
    active = np.array(sorted(active_constraints(problem, point, tau)), dtype=int)
    active_jac = np.vstack([derivatives.jac_g, derivatives.jac_h[active]])
    hessian = derivatives.hess_l
    checks = []

    margin = float(np.min(point.mu[active])) if active.size else np.inf
    checks.append(AssumptionCheck(
        name="strict_complementarity", passed=margin > tau, witness=margin,
        detail=f"min active mu over {active.size} active inequalities",
    ))

    sigma = _smallest_singular(active_jac)
    checks.append(AssumptionCheck(
        name="licq_central", passed=sigma > tau, witness=sigma, detail="smallest singular value of the active Jacobian",
    ))

    local_sigma, local_curvature = np.inf, np.inf
    for i, agent in problem.agents.items():
        part = point.agent(i)
        oracle = agent.evaluate(problem.local_vector(i, point.x))
        own = agent.own
        local_active = (part.mu > tau) | (np.abs(oracle.h) <= tau)
        rows = np.vstack([oracle.jac_g[:, own], oracle.jac_h[local_active][:, own]])
        local_sigma = min(local_sigma, _smallest_singular(rows))
        block = oracle.lagrangian_hessian(part.lam, part.mu)[own, own] + rho * np.eye(agent.n)
        local_curvature = min(local_curvature, float(np.linalg.eigvalsh(0.5 * (block + block.T))[0]))
    checks.append(AssumptionCheck(
        name="licq_per_agent", passed=local_sigma > tau, witness=local_sigma,
        detail="smallest singular value over the local active Jacobians",
    ))

    uniform = float(np.linalg.eigvalsh(hessian)[0]) if hessian.size else np.inf
    checks.append(AssumptionCheck(
        name="uniform_sosc", passed=uniform > 0, witness=uniform, detail="lambda_min of the Lagrangian Hessian",
    ))
    checks.append(AssumptionCheck(
        name="local_convexity", passed=local_curvature > 0, witness=local_curvature,
        detail=f"min over agents of lambda_min(local Hessian + {rho:g} I)",
    ))

    sosc = _reduced_curvature(hessian, active_jac)
    checks.append(AssumptionCheck(
        name="sosc", passed=sosc > 0, witness=sosc, detail="lambda_min on the null space of the active Jacobian",
    ))

    rows_g, rows_h = decoupled_rows(problem)
    rows_h = np.array([k for k in rows_h if k in set(active.tolist())], dtype=int)
    partial_jac = np.vstack([derivatives.jac_g[rows_g], derivatives.jac_h[rows_h]])
    partial = _reduced_curvature(hessian, partial_jac)
    checks.append(AssumptionCheck(
        name="partial_sosc", passed=partial > 0, witness=partial,
        detail="lambda_min on the null space of the decoupled active rows",
    ))

    return AssumptionReport(checks=checks)


def certify_basin(
    problem: ProblemGraph,
    trace,
    P_bar: np.ndarray,
    p_star: PrimalDualPoint,
    tau: float = 1e-6,
    plateau: float = 1e-9,
) -> bool:
    """
    Constructive basin check along a completed run:

      - every local active set matches the active set at p*
      - V(Δp) = Δpᵀ P̄ Δp strictly decreases until ‖Δp‖_P̄ reaches ``plateau``
      - local LICQ and local SOSC hold at every iterate
    """
    target = active_constraints(problem, p_star, tau)
    points = trace.points()
    values = [float((p.vector - p_star.vector) @ P_bar @ (p.vector - p_star.vector)) for p in points]

    for q in range(1, len(values)):
        if np.sqrt(max(values[q - 1], 0.0)) <= plateau:
            break
        if not values[q] < values[q - 1]:
            logger.info(f"{problem.name}: Lyapunov value increased at iteration {q} ({values[q - 1]:.3e} -> {values[q]:.3e})")
            return False

    rho = trace.config.rho
    for record, base in zip(trace.records, points):
        found = frozenset().union(*(y.active_set for y in record.local_solutions.values()))
        if found != target:
            logger.info(f"{problem.name}: active set {sorted(found)} at iteration {record.q}, expected {sorted(target)}")
            return False
        for i, y in record.local_solutions.items():
            zero = {j: np.zeros(problem.agent(i).n) for j in problem.neighbors(i)}
            nlp = assemble_local_nlp(problem, i, base, rho, zero)
            values_i = nlp.values(y.s)
            local_active = np.array([k - nlp.mu_offset for k in sorted(y.active_set)], dtype=int)
            rows = np.vstack([values_i.jac_g, values_i.jac_h[local_active]])
            if _smallest_singular(rows) <= tau or _reduced_curvature(nlp.hessian(y.s, y.nu, y.kappa), rows) <= 0:
                logger.info(f"{problem.name}: local regularity lost for agent {i} at iteration {record.q}")
                return False
    return True


def _stacked(problem: ProblemGraph, solutions: Mapping[int, LocalSolution]) -> np.ndarray:
    s = np.concatenate([solutions[i].s for i in problem.ids])
    nu = np.concatenate([solutions[i].nu for i in problem.ids] + [np.zeros(0)])
    kappa = np.concatenate([solutions[i].kappa for i in problem.ids] + [np.zeros(0)])
    return np.concatenate([s, nu, kappa])


def grad_phi_check(problem: ProblemGraph, point: PrimalDualPoint, h: float = 1e-5, rho: float = 0.0) -> float:
    """
    Max relative error between the central-difference Jacobian of the
    local-solution map Φ (every local NLP re-solved at perturbed points) and
    its closed form -M⁻¹(N - MD).

    Raises:
        AnalysisError: a perturbation changes an active set
    """
    if not h > 0:
        raise ValueError(f"difference step must be positive, got {h}")
    base = solve_all_local(problem, point, rho)
    base_sets = {i: y.active_set for i, y in base.items()}
    M, N, D = assemble_M_N_D(problem, point, rho, base)
    closed = grad_phi_closed_form(M, N, D)

    vector = point.vector
    columns = []
    for k in range(problem.p):
        images = []
        for sign in (1.0, -1.0):
            shifted = vector.copy()
            shifted[k] += sign * h
            solutions = solve_all_local(problem, problem.point_from_vector(shifted), rho)
            if any(solutions[i].active_set != base_sets[i] for i in problem.ids):
                raise AnalysisError(f"active set changed under a perturbation of coordinate {k}; reduce h")
            images.append(_stacked(problem, solutions))
        columns.append((images[0] - images[1]) / (2.0 * h))
    numeric = np.stack(columns, axis=1)
    return float(np.max(np.abs(numeric - closed)) / (1.0 + np.max(np.abs(closed))))


def certify(
    problem: ProblemGraph,
    p_star: PrimalDualPoint,
    config: EngineConfig,
    q_weight: float = 1.0,
    tau: float = 1e-6,
) -> RateCertificate:
    """
    Rate certificate of a configuration at a KKT point: step bound, Lyapunov
    matrix for Q = q_weight·I, rate constants and the assumption report.

    Raises:
        AnalysisError: the linearized iteration is not Schur stable
    """
    variant = config.variant
    if variant.uses_mixing:
        alpha_bar = max_step_size(assemble_A(problem, p_star, config.beta, config.gamma, variant))
    else:
        M, N, _ = assemble_M_N_D(problem, p_star, config.rho)
        alpha_bar = max_step_size(scipy.linalg.solve(M, N))
    A_cl = iteration_matrix(problem, p_star, config)
    Q = q_weight * np.eye(problem.p)
    P_bar = solve_discrete_lyapunov(A_cl, Q)
    C, C0, C1 = convergence_constants(P_bar, A_cl, Q)

    gamma_bar = None
    if variant.uses_correction:
        try:
            gamma_bar = min_gamma(problem, p_star, partial=variant is Variant.SBDP_PLUS_PARTIAL_SOSC)
        except AnalysisError as e:
            logger.warning(f"{problem.name}: {e}")
    try:
        gdd_norm, gdd_radius = gdd_metric(problem, p_star, config.rho)
    except AnalysisError as e:
        logger.warning(f"{problem.name}: GDD metric unavailable: {e}")
        gdd_norm = gdd_radius = None

    certificate = RateCertificate(
        variant=variant,
        alpha=config.alpha,
        alpha_bar=alpha_bar,
        beta=config.beta,
        rho_min=min_rho(problem, p_star),
        gamma_bar=gamma_bar,
        P_bar=P_bar,
        Q=Q,
        C=C,
        C0=C0,
        C1=C1,
        spectral_radius=spectral_radius(A_cl),
        gdd_norm=gdd_norm,
        gdd_spectral_radius=gdd_radius,
        assumptions=check_assumptions(problem, p_star, config.rho, tau),
    )
    logger.info(
        f"{problem.name}: alpha_bar={alpha_bar:.4g}, C={C:.4g}, C0={C0:.4g}, C1={C1:.4g}, "
        f"spectral radius={certificate.spectral_radius:.4g}"
    )
    return certificate
