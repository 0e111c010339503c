"""Reading and writing vector datasets, splitting them, and generating synthetic data."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, field_validator

logger = logging.getLogger(__name__)

VectorFormat = Literal["fvecs", "bvecs", "ivecs", "csv"]

ELEMENT_TYPES = {"fvecs": "<f4", "bvecs": "u1", "ivecs": "<i4"}


class DatasetError(ValueError):
    """Error for malformed dataset files or impossible splits."""

    pass


class DatasetSpec(BaseModel):
    """
    Where to find a dataset and how to cut it.

    :param path:
        the vector file
    :param format:
        ``fvecs``, ``bvecs``, ``ivecs`` or ``csv``; inferred from the
        file extension when omitted
    :param limit:
        read at most this many rows, in file order
    :param query_count:
        how many rows :func:`split` sets aside as queries
    :param seed:
        seed for the query sample
    """

    path: Path
    format: Optional[VectorFormat] = None
    limit: Optional[int] = None
    query_count: int = 0
    seed: int = 0

    @field_validator("limit")
    def limit_must_be_positive(cls, v: Optional[int]) -> Optional[int]:
        """Reject negative row caps."""
        if v is not None and v < 0:
            raise ValueError(f"limit must be non-negative, not {v}")
        return v

    @property
    def resolved_format(self) -> VectorFormat:
        """Get the explicit format, or the one named by the file extension."""
        if self.format is not None:
            return self.format
        return infer_format(self.path)


def infer_format(path: Union[str, Path]) -> VectorFormat:
    """Get the vector format from a file extension."""
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in ("fvecs", "bvecs", "ivecs", "csv"):
        return suffix  # type: ignore[return-value]
    raise DatasetError(f"cannot infer the vector format of {path}; pass it explicitly")


def _scan_records(raw: np.ndarray, element_size: int, path: Path) -> None:
    """Find the first malformed record of a vecs file and raise a precise error."""
    first_dim = int(raw[:4].view("<i4")[0])
    offset = 0
    index = 0
    while offset < raw.size:
        if offset + 4 > raw.size:
            raise DatasetError(f"{path}: truncated record {index}")
        dim = int(raw[offset : offset + 4].view("<i4")[0])
        if dim != first_dim:
            raise DatasetError(
                f"{path}: record {index} has dimension {dim}, expected {first_dim}"
            )
        offset += 4 + dim * element_size
        if offset > raw.size:
            raise DatasetError(f"{path}: truncated record {index}")
        index += 1


def _read_vecs(path: Path, fmt: str, limit: Optional[int]) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.zeros((0, 0))
    if raw.size < 4:
        raise DatasetError(f"{path}: truncated record 0")
    element = np.dtype(ELEMENT_TYPES[fmt])
    dim = int(raw[:4].view("<i4")[0])
    if dim < 1:
        raise DatasetError(f"{path}: record 0 has dimension {dim}")
    record_size = 4 + dim * element.itemsize
    record_type = np.dtype([("dim", "<i4"), ("vec", element, (dim,))])
    count = raw.size // record_size
    if raw.size % record_size:
        _scan_records(raw, element.itemsize, path)
    records = raw[: count * record_size].view(record_type)
    mismatched = np.flatnonzero(records["dim"] != dim)
    if mismatched.size:
        _scan_records(raw, element.itemsize, path)
    if limit is not None:
        records = records[:limit]
    return records["vec"].astype(np.float64)


def _read_csv(path: Path, limit: Optional[int]) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for line_number, row in enumerate(csv.reader(f)):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if line_number == 0:
                    continue
                raise DatasetError(f"{path}: non-numeric value on line {line_number + 1}")
            if rows and len(values) != len(rows[0]):
                raise DatasetError(
                    f"{path}: line {line_number + 1} has {len(values)} values, "
                    f"expected {len(rows[0])}"
                )
            rows.append(values)
            if limit is not None and len(rows) >= limit:
                break
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=np.float64)


def read_vectors(spec: DatasetSpec) -> np.ndarray:
    """
    Load a dataset as an n×D float64 matrix.

    Binary ``*vecs`` records are a little-endian int32 dimension followed by
    that many float32 (fvecs), uint8 (bvecs) or int32 (ivecs) values.
    CSV files hold one comma-separated vector per line with an optional header.
    """
    fmt = spec.resolved_format
    if not spec.path.exists():
        raise DatasetError(f"{spec.path} does not exist")
    if fmt == "csv":
        data = _read_csv(spec.path, spec.limit)
    else:
        data = _read_vecs(spec.path, fmt, spec.limit)
    if spec.limit is not None:
        data = data[: spec.limit]
    if not np.all(np.isfinite(data)):
        raise DatasetError(f"{spec.path} contains non-finite values")
    logger.info("read %d vectors of dimension %d from %s", data.shape[0], data.shape[1], spec.path)
    return data


def write_vectors(data: np.ndarray, path: Union[str, Path], fmt: Optional[VectorFormat] = None) -> None:
    """Write an n×D matrix in one of the formats :func:`read_vectors` accepts."""
    matrix = np.asarray(data)
    if matrix.ndim != 2:
        raise DatasetError(f"expected a 2-D matrix, got {matrix.ndim} dimensions")
    fmt = fmt or infer_format(path)
    if fmt == "csv":
        np.savetxt(path, matrix, delimiter=",", fmt="%.17g")
        return
    element = np.dtype(ELEMENT_TYPES[fmt])
    if element.kind in "iu":
        limits = np.iinfo(element)
        if matrix.size and (matrix.min() < limits.min or matrix.max() > limits.max):
            raise DatasetError(
                f"{fmt} holds values in {limits.min}..{limits.max}; "
                f"got {matrix.min()}..{matrix.max()}"
            )
        if not np.array_equal(matrix, np.round(matrix)):
            raise DatasetError(f"{fmt} holds integers only")
    n, dim = matrix.shape
    records = np.empty(n, dtype=[("dim", "<i4"), ("vec", element, (dim,))])
    records["dim"] = dim
    records["vec"] = matrix.astype(element)
    records.tofile(str(path))


def read_labels(path: Union[str, Path]) -> np.ndarray:
    """
    Load labels as an n×l 0/1 matrix.

    A file with a single column of integer class ids becomes a one-hot matrix;
    a file with several 0/1 columns is used as-is.
    """
    matrix = read_vectors(DatasetSpec(path=Path(path), format="csv"))
    if matrix.shape[1] == 1:
        return one_hot(matrix[:, 0])
    if not np.all((matrix == 0) | (matrix == 1)):
        raise DatasetError(f"{path}: multi-column labels must be 0 or 1")
    return matrix


def one_hot(class_ids: np.ndarray) -> np.ndarray:
    """Turn integer class ids into an n×l 0/1 matrix with one column per class."""
    ids = np.asarray(class_ids)
    if ids.size and not np.all(ids == np.round(ids)):
        raise DatasetError("class ids must be integers")
    classes, inverse = np.unique(ids.astype(np.int64), return_inverse=True)
    result = np.zeros((ids.shape[0], classes.shape[0]))
    result[np.arange(ids.shape[0]), inverse] = 1.0
    return result


def split_indices(n: int, query_count: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pick a seeded random sample of row indices as queries.

    :returns:
        the ascending training row indices and the query row indices
        in sampled order
    """
    if not 0 <= query_count < n:
        raise DatasetError(f"query_count must be between 0 and {n - 1}, not {query_count}")
    rng = np.random.default_rng(seed)
    query_index = rng.choice(n, size=query_count, replace=False)
    keep = np.ones(n, dtype=bool)
    keep[query_index] = False
    return np.flatnonzero(keep), query_index


def split(data: np.ndarray, query_count: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Set aside a seeded random sample of rows as queries; get (train, queries)."""
    train_index, query_index = split_indices(data.shape[0], query_count, seed)
    return data[train_index], data[query_index]


def make_synthetic(
    kind: Literal["uniform_ball", "gaussian_clusters"],
    n: int,
    d: int,
    k_clusters: int = 10,
    seed: int = 0,
    spread: float = 4.0,
    noise: float = 1.0,
    outlier_fraction: float = 0.0,
    outlier_scale: float = 5.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generate test data.

    :param kind:
        ``uniform_ball`` samples uniformly inside the unit d-ball;
        ``gaussian_clusters`` places ``k_clusters`` centers on a sphere of
        radius ``spread`` and adds isotropic noise of scale ``noise``
    :param outlier_fraction:
        for ``gaussian_clusters``, the share of rows whose noise is
        ``outlier_scale`` times wider. Descriptor collections usually hold a
        few such far vectors, and they set the scale of the norm
        normalization, leaving most points well inside the unit ball.
    :returns:
        the n×d data and an integer label per row (all zero for ``uniform_ball``)
    """
    if n < 1:
        raise DatasetError(f"n must be at least 1, not {n}")
    if not 0 <= outlier_fraction < 1:
        raise DatasetError(f"outlier_fraction must be in [0, 1), not {outlier_fraction}")
    if not outlier_scale > 0:
        raise DatasetError(f"outlier_scale must be positive, not {outlier_scale}")
    rng = np.random.default_rng(seed)
    if kind == "uniform_ball":
        directions = rng.standard_normal((n, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = rng.random(n) ** (1.0 / d)
        return directions * radii[:, None], np.zeros(n, dtype=np.int64)
    if kind == "gaussian_clusters":
        centers = rng.standard_normal((k_clusters, d))
        centers *= spread / np.linalg.norm(centers, axis=1, keepdims=True)
        labels = rng.integers(0, k_clusters, size=n)
        points = centers[labels] + noise * rng.standard_normal((n, d))
        count = int(round(outlier_fraction * n))
        if count:
            rows = rng.choice(n, size=count, replace=False)
            wide = outlier_scale * noise * rng.standard_normal((count, d))
            points[rows] = centers[labels[rows]] + wide
        return points, labels
    raise DatasetError(f"unknown synthetic kind {kind!r}")
