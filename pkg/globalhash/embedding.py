"""Low-dimensional embeddings of raw descriptors: PCA and supervised CCA."""

from __future__ import annotations

import logging
from typing import Literal, Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from globalhash.kernels import KernelError, as_matrix, sym_eig_topk

logger = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    """Error for failed attempts to fit or apply an embedding."""

    pass


class EmbeddingModel(BaseModel):
    r"""
    A learned map from D-dimensional descriptors to a d-dimensional space.

    Embedded points are ``((x - mean) @ projection) / scale``, so every
    training point lands inside the unit ball.

    :param mean:
        the centering offset, one value per input dimension
    :param projection:
        a D×d matrix; for PCA its columns are the leading eigenvectors of
        the data covariance, for CCA they are canonical directions
        scaled by their correlations
    :param scale:
        the largest embedded norm seen at fit time
    :param kind:
        ``pca`` or ``cca``
    :param eigenvalues:
        the PCA variances or CCA correlations behind each projection column
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    projection: np.ndarray
    scale: float
    kind: Literal["pca", "cca"] = "pca"
    eigenvalues: Optional[np.ndarray] = None

    @field_validator("mean", "eigenvalues", mode="before")
    def vector_must_be_float(cls, v):
        """Store vectors as float64 arrays."""
        if v is None:
            return v
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @field_validator("projection", mode="before")
    def projection_must_be_finite(cls, v) -> np.ndarray:
        """Store the projection as a finite float64 matrix."""
        return as_matrix(v, name="projection")

    @field_validator("scale")
    def scale_must_be_positive(cls, v: float) -> float:
        """Reject zero or negative norm scales."""
        if not v > 0:
            raise ValueError(f"scale must be positive, not {v}")
        return v

    @model_validator(mode="after")
    def dimensions_must_agree(self) -> EmbeddingModel:
        """Check that mean, projection and d are consistent."""
        input_dim, output_dim = self.projection.shape
        if self.mean.shape[0] != input_dim:
            raise ValueError(
                f"mean has {self.mean.shape[0]} entries but projection has {input_dim} rows"
            )
        if output_dim > input_dim:
            raise ValueError(f"embedded dimension {output_dim} exceeds input dimension {input_dim}")
        return self

    @property
    def input_dim(self) -> int:
        """Get D, the descriptor dimension."""
        return self.projection.shape[0]

    @property
    def output_dim(self) -> int:
        """Get d, the embedded dimension."""
        return self.projection.shape[1]

    def __str__(self) -> str:
        return f"{self.kind.upper()} embedding {self.input_dim}->{self.output_dim}"


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _largest_norm(centered: np.ndarray, projection: np.ndarray) -> float:
    return float(np.linalg.norm(centered @ projection, axis=1).max(initial=0.0))


def fit_pca(data: np.ndarray, d: int) -> EmbeddingModel:
    """
    Fit a PCA embedding with global norm normalization.

    :param data:
        an n×D matrix with one descriptor per row
    :param d:
        the number of principal components to keep
    :returns:
        a model whose projection holds the leading ``d`` covariance eigenvectors
    """
    matrix = as_matrix(data, name="data")
    n, input_dim = matrix.shape
    if n < 2:
        raise EmbeddingError(f"PCA needs at least 2 points, got {n}")
    if not 1 <= d <= min(input_dim, n - 1):
        raise EmbeddingError(f"d must be between 1 and {min(input_dim, n - 1)}, not {d}")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    covariance = centered.T @ centered / (n - 1)
    covariance = (covariance + covariance.T) / 2
    if np.trace(covariance) <= 1e-300:
        raise EmbeddingError("degenerate covariance: the data has zero variance")
    values, vectors = sym_eig_topk(covariance, d)
    projection = fix_signs(vectors)
    scale = _largest_norm(centered, projection)
    if scale <= 0:
        raise EmbeddingError("degenerate covariance: embedded data is all zero")
    logger.debug("PCA kept %d of %d dimensions, variance %.6g", d, input_dim, values.sum())
    return EmbeddingModel(
        mean=mean, projection=projection, scale=scale, kind="pca", eigenvalues=values
    )


def captured_variance(model: EmbeddingModel) -> float:
    """Get the total covariance variance captured by a PCA model's columns."""
    if model.eigenvalues is None:
        return 0.0
    return float(np.sum(model.eigenvalues))


def fit_cca(
    data: np.ndarray, labels: np.ndarray, d: int, reg: float = 1e-4
) -> EmbeddingModel:
    r"""
    Fit a supervised CCA embedding against a label matrix.

    Solves ``XᵀZ(ZᵀZ + reg·I)⁻¹ZᵀX w = λ²(XᵀX + reg·I) w`` on centered data
    by reducing it to a standard symmetric eigenproblem with the Cholesky
    factor of ``XᵀX + reg·I``.

    :param data:
        an n×D descriptor matrix
    :param labels:
        an n×l 0/1 label matrix
    :param d:
        the number of canonical directions to keep
    :param reg:
        the ridge added to both covariance blocks
    :returns:
        a model whose projection columns are ``w_k`` scaled by ``λ_k``
    """
    matrix = as_matrix(data, name="data")
    label_matrix = as_matrix(labels, name="labels")
    n, input_dim = matrix.shape
    if label_matrix.shape[0] != n:
        raise EmbeddingError(
            f"data has {n} rows but labels have {label_matrix.shape[0]} rows"
        )
    label_dim = label_matrix.shape[1]
    if d > label_dim:
        raise EmbeddingError(f"label space too small: d={d} exceeds {label_dim} labels")
    if not 1 <= d <= input_dim:
        raise EmbeddingError(f"d must be between 1 and {input_dim}, not {d}")
    if reg <= 0:
        raise EmbeddingError(f"reg must be positive, not {reg}")

    mean = matrix.mean(axis=0)
    centered = matrix - mean
    centered_labels = label_matrix - label_matrix.mean(axis=0)

    data_cov = centered.T @ centered + reg * np.eye(input_dim)
    label_cov = centered_labels.T @ centered_labels + reg * np.eye(label_dim)
    cross = centered.T @ centered_labels

    lower = scipy.linalg.cholesky(data_cov, lower=True)
    # L⁻¹ XᵀZ
    whitened_cross = scipy.linalg.solve_triangular(lower, cross, lower=True)
    inner = whitened_cross @ scipy.linalg.solve(label_cov, whitened_cross.T, assume_a="pos")
    inner = (inner + inner.T) / 2
    try:
        values, vectors = sym_eig_topk(inner, d)
    except KernelError as err:
        raise EmbeddingError(str(err)) from err
    directions = scipy.linalg.solve_triangular(lower.T, vectors, lower=False)
    correlations = np.sqrt(np.clip(values, 0.0, None))
    projection = fix_signs(directions) * correlations
    scale = _largest_norm(centered, projection)
    if scale <= 0:
        raise EmbeddingError("degenerate covariance: CCA projection is all zero")
    logger.debug("CCA correlations %s", np.array2string(correlations, precision=4))
    return EmbeddingModel(
        mean=mean, projection=projection, scale=scale, kind="cca", eigenvalues=correlations
    )


def embed(model: EmbeddingModel, data: np.ndarray) -> np.ndarray:
    """
    Map descriptors into the model's normalized embedded space.

    :param model:
        a fitted :class:`EmbeddingModel`
    :param data:
        an n×D matrix
    :returns:
        an n×d matrix
    """
    matrix = as_matrix(data, name="data")
    if matrix.shape[1] != model.input_dim:
        raise EmbeddingError(
            f"data has {matrix.shape[1]} columns but the model expects {model.input_dim}"
        )
    return ((matrix - model.mean) @ model.projection) / model.scale
