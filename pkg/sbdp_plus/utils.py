import numpy as np

from sbdp_plus.errors import DimensionError


def as_vector(value, length: int, what: str) -> np.ndarray:
    """Convert to a float vector and check its length.

    Args:
        value: array-like input
        length: expected number of entries
        what: name used in the error message

    Returns:
        np.ndarray: 1-d float array
    """
    array = np.asarray(value, dtype=float).reshape(-1)
    if array.shape[0] != length:
        raise DimensionError(f"{what}: expected length {length}, got {array.shape[0]}")
    return array


def as_matrix(value, rows: int, cols: int, what: str) -> np.ndarray:
    """Convert to a float matrix and check its shape."""
    array = np.asarray(value, dtype=float)
    if array.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    if array.shape != (rows, cols):
        raise DimensionError(f"{what}: expected shape ({rows}, {cols}), got {array.shape}")
    return array


def fd_step(z: np.ndarray, relative_step: float) -> np.ndarray:
    """Per-component central-difference step ``h·(1+|z|)``."""
    return relative_step * (1.0 + np.abs(z))


def fd_jacobian(fun, z: np.ndarray, relative_step: float) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape (len(fun(z)), len(z))."""
    steps = fd_step(z, relative_step)
    columns = []
    for k in range(z.shape[0]):
        e = np.zeros_like(z)
        e[k] = steps[k]
        columns.append((np.atleast_1d(fun(z + e)) - np.atleast_1d(fun(z - e))) / (2.0 * steps[k]))
    if not columns:
        return np.zeros((np.atleast_1d(fun(z)).shape[0], 0))
    return np.stack(columns, axis=1)


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def check_symmetric(matrices: np.ndarray, what: str, tol: float = 1e-10) -> np.ndarray:
    """Raise DimensionError unless every trailing square matrix satisfies max|H - Hᵀ| ≤ tol·max(1, max|H|)."""
    if matrices.size == 0:
        return matrices
    gap = float(np.max(np.abs(matrices - np.swapaxes(matrices, -1, -2))))
    if gap > tol * max(1.0, float(np.max(np.abs(matrices)))):
        raise DimensionError(f"{what}: not symmetric (max |H - Hᵀ| = {gap:.3e})")
    return matrices


def max_norm(*parts) -> float:
    """Largest absolute entry over several arrays, 0 for all-empty input."""
    values = [float(np.max(np.abs(part))) for part in parts if np.size(part) > 0]
    return max(values, default=0.0)


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Max entry-wise error scaled by ``1 + max|exact|``."""
    if np.size(exact) == 0:
        return 0.0
    return float(np.max(np.abs(approx - exact)) / (1.0 + np.max(np.abs(exact))))
