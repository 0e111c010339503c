"""Sign-random-projection hashing, used as a retrieval baseline."""

from __future__ import annotations

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from globalhash.codes import CodeMatrix
from globalhash.kernels import as_matrix


class LshModel(BaseModel):
    """
    A single table of ``c`` random hyperplanes through the data mean.

    :param mean:
        the centering offset
    :param projection:
        a D×c matrix of Gaussian hyperplane normals
    :param seed:
        the seed the projection was drawn with
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    projection: np.ndarray
    seed: Optional[int] = None

    @field_validator("mean", mode="before")
    def mean_must_be_float(cls, v) -> np.ndarray:
        """Store the mean as a float64 vector."""
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @field_validator("projection", mode="before")
    def projection_must_be_finite(cls, v) -> np.ndarray:
        """Store the projection as a finite float64 matrix."""
        return as_matrix(v, name="projection")

    @property
    def c(self) -> int:
        """Get the code length."""
        return self.projection.shape[1]


def fit_lsh(data: np.ndarray, c: int, seed: int = 0) -> LshModel:
    """Draw ``c`` random hyperplanes through the mean of ``data``."""
    matrix = as_matrix(data, name="data")
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((matrix.shape[1], c))
    return LshModel(mean=matrix.mean(axis=0), projection=projection, seed=seed)


def lsh_encode(data: np.ndarray, model: LshModel) -> CodeMatrix:
    """Get one bit per hyperplane: +1 on or above it, −1 below."""
    matrix = as_matrix(data, name="data")
    if matrix.shape[1] != model.projection.shape[0]:
        raise ValueError(
            f"data has {matrix.shape[1]} columns but the model expects "
            f"{model.projection.shape[0]}"
        )
    return CodeMatrix.from_bits((matrix - model.mean) @ model.projection >= 0)
