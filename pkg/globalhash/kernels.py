"""Dense linear algebra and order statistics shared by the trainers."""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np
import scipy.linalg


class KernelError(ValueError):
    """Error for inputs that violate a numeric kernel's preconditions."""

    pass


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Get a finite 2-D float64 array, or raise :class:`KernelError`."""
    result = np.asarray(values, dtype=np.float64)
    if result.ndim != 2:
        raise KernelError(f"{name} must be 2-dimensional, not {result.ndim}-dimensional")
    if not np.all(np.isfinite(result)):
        raise KernelError(f"{name} contains non-finite entries")
    return result


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Get a finite 1-D float64 array, or raise :class:`KernelError`."""
    result = np.asarray(values, dtype=np.float64)
    if result.ndim != 1:
        raise KernelError(f"{name} must be 1-dimensional, not {result.ndim}-dimensional")
    if not np.all(np.isfinite(result)):
        raise KernelError(f"{name} contains non-finite entries")
    return result


def median(values) -> float:
    """
    Get the median of a sample.

    Even-length samples use the mean of the two middle order statistics.

    :param values:
        a non-empty sequence of finite reals
    """
    sample = as_vector(values, name="sample")
    if sample.size == 0:
        raise KernelError("empty sample")
    return float(np.median(sample))


def column_medians(matrix: np.ndarray) -> np.ndarray:
    """Get the :func:`median` of every column of a matrix."""
    data = as_matrix(matrix)
    if data.shape[0] == 0:
        raise KernelError("empty sample")
    return np.median(data, axis=0)


def sym_eig_topk(a: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Get the ``k`` largest eigenpairs of a symmetric matrix.

    :param a:
        a symmetric square matrix
    :param k:
        how many eigenpairs to return, at most the dimension of ``a``
    :returns:
        eigenvalues in descending order, and the matching
        orthonormal eigenvectors as columns
    """
    matrix = as_matrix(a)
    dim = matrix.shape[0]
    if matrix.shape[1] != dim:
        raise KernelError(f"expected a square matrix, got shape {matrix.shape}")
    if not 1 <= k <= dim:
        raise KernelError(f"k must be between 1 and {dim}, not {k}")
    tolerance = 1e-10 * max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=tolerance):
        raise KernelError("matrix is not symmetric")
    values, vectors = scipy.linalg.eigh(matrix, subset_by_index=[dim - k, dim - 1])
    return values[::-1].copy(), vectors[:, ::-1].copy()


def svd(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Get the thin singular value decomposition ``a = u @ diag(sigma) @ v.T``.

    :returns:
        column-orthonormal ``u``, non-increasing ``sigma``,
        and column-orthonormal ``v`` (not transposed)
    """
    matrix = as_matrix(a)
    u, sigma, vt = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    return u, sigma, vt.T


def solve_quadratic(a: float, b: float, c: float) -> Tuple[float, ...]:
    """
    Get the real roots of ``a·x² + b·x + c = 0`` in ascending order.

    A discriminant in ``[-1e-12·b², 0]`` counts as a double root.
    No real roots gives an empty tuple.
    """
    if a == 0.0:
        if b == 0.0:
            raise KernelError("degenerate quadratic: a and b are both zero")
        return (-c / b,)
    discriminant = b * b - 4.0 * a * c
    if discriminant < 0.0:
        if discriminant < -1e-12 * b * b:
            return ()
        discriminant = 0.0
    if discriminant == 0.0:
        return (-b / (2.0 * a),)
    # cancellation-free form
    q = -0.5 * (b + math.copysign(math.sqrt(discriminant), b))
    if q == 0.0:
        return (0.0,)
    roots = sorted((q / a, c / q))
    return tuple(roots)
