from typing import Tuple

import numpy as np
import scipy.linalg

from sbdp_plus.analysis.matrices import spectral_radius
from sbdp_plus.errors import AnalysisError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings
from sbdp_plus.utils import symmetrize

logger = get_logger_loguru(__name__)

RESIDUAL_TOL = 1e-8
E_FRACTION = 1.0 - 1e-6
DIRECT_MAX_DIM = 40


def solve_discrete_lyapunov(A_cl: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """
    Solve A_clᵀ P A_cl - P = -Q. Small systems go through the vectorized
    system (I - A_clᵀ ⊗ A_clᵀ) vec(P) = vec(Q), larger ones through the
    bilinear transformation to a continuous Lyapunov equation.

    Args:
        A_cl: Schur-stable closed-loop matrix I - αA
        Q: symmetric positive-definite weight

    Returns:
        np.ndarray: symmetric positive-definite P̄

    Raises:
        AnalysisError: A_cl not Schur stable, p above the size guard, or a
            solution with relative residual above 1e-8 or not positive definite
    """
    A_cl, Q = np.asarray(A_cl, dtype=float), np.asarray(Q, dtype=float)
    p = A_cl.shape[0]
    if A_cl.shape != (p, p) or Q.shape != (p, p):
        raise AnalysisError(f"shapes {A_cl.shape} and {Q.shape} do not form a Lyapunov pair")
    if p == 0:
        return np.zeros((0, 0))
    if p > settings.LYAPUNOV_MAX_DIM:
        raise AnalysisError(f"p={p} exceeds the Lyapunov size limit {settings.LYAPUNOV_MAX_DIM}")
    radius = spectral_radius(A_cl)
    if radius >= 1.0:
        raise AnalysisError(f"iteration matrix is not Schur stable (spectral radius {radius:.6g})")

    method = "direct" if p <= DIRECT_MAX_DIM else "bilinear"
    P = symmetrize(scipy.linalg.solve_discrete_lyapunov(A_cl.T, Q, method=method))

    residual = np.linalg.norm(A_cl.T @ P @ A_cl - P + Q) / max(1.0, np.linalg.norm(P), np.linalg.norm(Q))
    if residual > RESIDUAL_TOL:
        raise AnalysisError(f"Lyapunov residual {residual:.3e} above {RESIDUAL_TOL:.0e} (method {method})")
    logger.debug(f"Lyapunov solve p={p} method={method} radius={radius:.6g} residual={residual:.3e}")
    if np.linalg.eigvalsh(P)[0] <= 0:
        raise AnalysisError("Lyapunov solution is not positive definite")
    return P


def lyapunov_residual(A_cl: np.ndarray, P: np.ndarray, Q: np.ndarray) -> float:
    return float(np.max(np.abs(A_cl.T @ P @ A_cl - P + Q))) if P.size else 0.0


def convergence_constants(P_bar: np.ndarray, A_cl: np.ndarray, Q: np.ndarray) -> Tuple[float, float, float]:
    """
    Rate constants of a Lyapunov pair:

        C  = sqrt(λ_max(P̄^{-1/2}(P̄ - Q)P̄^{-1/2})), the P̄-norm of A_cl
        C0 = sqrt(λ_max(P̄)/λ_min(P̄))
        C1 = sqrt(1 - e/λ_max(P̄)),  e = (1 - 1e-6)·λ_min(Q)

    P̄ - Q is taken as A_clᵀP̄A_cl, equal for an exact pair.
    """
    if P_bar.size == 0:
        return 0.0, 1.0, 0.0
    p_values, p_vectors = np.linalg.eigh(P_bar)
    root_inv = (p_vectors / np.sqrt(p_values)) @ p_vectors.T
    weighted = symmetrize(root_inv @ A_cl.T @ P_bar @ A_cl @ root_inv)
    C = float(np.sqrt(max(np.linalg.eigvalsh(weighted)[-1], 0.0)))
    C0 = float(np.sqrt(p_values[-1] / p_values[0]))
    e = E_FRACTION * float(np.linalg.eigvalsh(Q)[0])
    C1 = float(np.sqrt(max(1.0 - e / p_values[-1], 0.0)))
    return C, C0, C1
