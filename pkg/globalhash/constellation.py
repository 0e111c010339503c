"""Satellite constellations and the distance-threshold hash function."""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.spatial.distance import cdist

from globalhash.codes import CodeMatrix
from globalhash.kernels import as_matrix, column_medians
from globalhash.workers import map_ordered, resolve_threads, row_chunks

logger = logging.getLogger(__name__)


class ConstellationError(ValueError):
    """Error for inconsistent satellites, thresholds or embedded points."""

    pass


class Constellation(BaseModel):
    r"""
    A trained hashing model: satellites in the embedded space and their thresholds.

    Each satellite contributes one bit. A point gets −1 for satellite ``j``
    when its distance to the satellite is at most ``thresholds[j]``,
    and +1 otherwise.

    :param satellites:
        a c×d matrix of final satellite positions, with any group
        rotations already applied
    :param thresholds:
        the distance cut-off for each satellite
    :param groups:
        ``(start, length)`` index ranges of the satellite groups
    :param r_s:
        the radius satellites were placed at
    :param rho:
        the ratio c/(d+1) used to size the embedding
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    satellites: np.ndarray
    thresholds: np.ndarray
    groups: List[Tuple[int, int]]
    r_s: float = 2.0
    rho: float = 1.0

    @field_validator("satellites", mode="before")
    def satellites_must_be_matrix(cls, v) -> np.ndarray:
        """Store satellites as a finite float64 matrix."""
        return as_matrix(v, name="satellites")

    @field_validator("thresholds", mode="before")
    def thresholds_must_be_finite(cls, v) -> np.ndarray:
        """Store thresholds as a finite float64 vector."""
        result = np.asarray(v, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(result)):
            raise ValueError("thresholds must be finite")
        return result

    @field_validator("r_s")
    def radius_must_be_positive(cls, v: float) -> float:
        """Reject non-positive satellite radii."""
        if not v > 0:
            raise ValueError(f"r_s must be positive, not {v}")
        return v

    @field_validator("rho")
    def rho_must_be_a_ratio(cls, v: float) -> float:
        """Keep rho in (0, 1]."""
        if not 0 < v <= 1:
            raise ValueError(f"rho must be in (0, 1], not {v}")
        return v

    @model_validator(mode="after")
    def layout_must_cover_satellites(self) -> Constellation:
        """Check thresholds and groups against the satellite matrix."""
        c, d = self.satellites.shape
        if c < 1:
            raise ValueError("a constellation needs at least one satellite")
        if self.thresholds.shape[0] != c:
            raise ValueError(f"{c} satellites but {self.thresholds.shape[0]} thresholds")
        position = 0
        for start, length in self.groups:
            if start != position or length < 1:
                raise ValueError(f"groups must tile 0..{c} contiguously, got {self.groups}")
            if length > d + 1:
                raise ValueError(f"group of {length} satellites exceeds d+1={d + 1}")
            position += length
        if position != c:
            raise ValueError(f"group lengths sum to {position}, not {c}")
        return self

    @property
    def c(self) -> int:
        """Get the code length."""
        return self.satellites.shape[0]

    @property
    def d(self) -> int:
        """Get the embedded dimension."""
        return self.satellites.shape[1]

    def __str__(self) -> str:
        return f"Constellation(c={self.c}, d={self.d}, groups={len(self.groups)})"


def d2s(points: np.ndarray, satellites: np.ndarray) -> np.ndarray:
    """
    Get the distance from every point to every satellite.

    :param points:
        an n×d matrix of embedded points
    :param satellites:
        a c×d matrix
    :returns:
        an n×c matrix of Euclidean distances
    """
    y = as_matrix(points, name="points")
    s = as_matrix(satellites, name="satellites")
    if y.shape[1] != s.shape[1]:
        raise ConstellationError(
            f"points have {y.shape[1]} dimensions but satellites have {s.shape[1]}"
        )
    if y.shape[0] == 0:
        return np.zeros((0, s.shape[0]))
    return cdist(y, s, metric="euclidean")


def fit_thresholds(points: np.ndarray, satellites: np.ndarray) -> np.ndarray:
    """Get the median distance from the points to each satellite."""
    distances = d2s(points, satellites)
    if distances.shape[0] < 2:
        raise ConstellationError(f"thresholds need at least 2 points, got {distances.shape[0]}")
    return column_medians(distances)


def count_median_ties(distances: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Count, per column, how many distances equal the column's threshold."""
    return np.count_nonzero(distances == thresholds, axis=0)


def encode_distances(distances: np.ndarray, thresholds: np.ndarray) -> CodeMatrix:
    """Threshold a distance matrix into codes; ties go to −1."""
    return CodeMatrix.from_bits(distances > thresholds)


def encode(
    points: np.ndarray, model: Constellation, threads: Optional[int] = None
) -> CodeMatrix:
    """
    Hash embedded points with a constellation.

    :param points:
        an n×d matrix in the constellation's embedded space
    :param model:
        the trained :class:`Constellation`
    :param threads:
        worker count for row partitions; see :func:`~globalhash.workers.resolve_threads`
    """
    y = as_matrix(points, name="points")
    if y.shape[1] != model.d:
        raise ConstellationError(
            f"points have {y.shape[1]} dimensions but the constellation has {model.d}"
        )
    workers = resolve_threads(threads)
    chunks = row_chunks(y.shape[0], workers)
    if len(chunks) <= 1:
        return encode_distances(d2s(y, model.satellites), model.thresholds)
    parts = map_ordered(
        lambda rows: encode_distances(d2s(y[rows], model.satellites), model.thresholds).words,
        chunks,
        threads=workers,
    )
    return CodeMatrix(c=model.c, words=np.vstack(parts))


def default_rho(c: int) -> float:
    """Get the default bits-per-group ratio: 1 up to 16 bits, 0.5 beyond."""
    return 1.0 if c <= 16 else 0.5


def layout_rho(c: int, d: int) -> float:
    """Get the ratio c/(d+1) a code length and embedded dimension imply, capped at 1."""
    return min(1.0, c / (d + 1))


class SatelliteConfig(BaseModel):
    """
    Settings shared by every satellite placement method.

    :param c:
        the code length in bits, one satellite per bit
    :param rho:
        the ratio c/(d+1); defaults to 1 for c ≤ 16 and 0.5 otherwise
    :param r_s:
        the radius satellites are placed at
    :param seed:
        seed for the single random generator used in training
    :param extra_anchor:
        whether each group holds d+1 satellites (``True``) or only d
    :param threads:
        worker count for per-satellite phases
    """

    c: int
    rho: Optional[float] = None
    r_s: float = 2.0
    seed: int = 0
    extra_anchor: bool = True
    threads: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def rho_defaults_from_code_length(cls, data):
        """Fill in rho from the code length when it is not given."""
        if isinstance(data, dict) and data.get("rho") is None and "c" in data:
            data = {**data, "rho": default_rho(int(data["c"]))}
        return data

    @field_validator("c")
    def code_length_must_allow_pairs(cls, v: int) -> int:
        """Require at least two bits."""
        if v < 2:
            raise ValueError(f"c must be at least 2, not {v}")
        return v

    @field_validator("rho")
    def rho_must_be_a_ratio(cls, v: Optional[float]) -> Optional[float]:
        """Keep rho in (0, 1]."""
        if v is not None and not 0 < v <= 1:
            raise ValueError(f"rho must be in (0, 1], not {v}")
        return v

    @field_validator("r_s")
    def radius_must_be_positive(cls, v: float) -> float:
        """Reject non-positive satellite radii."""
        if not v > 0:
            raise ValueError(f"r_s must be positive, not {v}")
        return v


def derive_dims(
    c: int, rho: float, input_dim: int, extra_anchor: bool = True
) -> Tuple[int, List[Tuple[int, int]]]:
    """
    Get the embedded dimension and the satellite group layout.

    :param c:
        the code length
    :param rho:
        the ratio c/(d+1)
    :param input_dim:
        the largest dimension the embedding can produce
    :param extra_anchor:
        when ``False``, groups hold d satellites and d = round(c/rho)
    :returns:
        ``d`` and a list of ``(start, length)`` groups; every group is full
        except possibly the last
    """
    if c < 2:
        raise ConstellationError(f"c must be at least 2, not {c}")
    full = int(round(c / rho))
    d = min(full - 1 if extra_anchor else full, input_dim)
    if d < 1:
        raise ConstellationError(f"derived dimension d={d} is below 1")
    size = d + 1 if extra_anchor else d
    groups = [(start, min(size, c - start)) for start in range(0, c, size)]
    return d, groups
