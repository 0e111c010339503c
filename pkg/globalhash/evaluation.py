"""Retrieval-quality evaluation: ground truth, MAP, hash lookup, and diagnostics."""

from __future__ import annotations

import csv
import logging
import math
import sys
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.spatial.distance import cdist, pdist

from globalhash.codes import CodeMatrix, hamming_to_all, require_same_length
from globalhash.constellation import Constellation, encode, fit_thresholds
from globalhash.dataio import make_synthetic
from globalhash.kernels import as_matrix
from globalhash.workers import map_ordered, resolve_threads, row_chunks

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["method", "c", "map", "precision", "recall", "f1", "radius", "n", "seed"]
DIAGNOSTIC_LIMIT = 5000
QUERY_BATCH = 256


class EvaluationError(ValueError):
    """Error for evaluation inputs that cannot be compared."""

    pass


class GroundTruth(BaseModel):
    """
    The true neighbors of each query among the base points.

    :param neighbors:
        one array of base indices per query: nearest first for
        Euclidean ground truth, ascending for label-based ground truth
    :param n_base:
        the number of base points the indices refer to
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    neighbors: List[np.ndarray]
    n_base: int

    @field_validator("neighbors", mode="before")
    def neighbors_must_be_int_arrays(cls, v) -> List[np.ndarray]:
        """Store each neighbor list as an int64 array."""
        return [np.asarray(row, dtype=np.int64).reshape(-1) for row in v]

    @model_validator(mode="after")
    def indices_must_be_in_range(self) -> GroundTruth:
        """Reject neighbor indices outside the base set."""
        for i, row in enumerate(self.neighbors):
            if row.size and (row.min() < 0 or row.max() >= self.n_base):
                raise ValueError(f"query {i} has neighbor indices outside 0..{self.n_base - 1}")
        return self

    def __len__(self) -> int:
        return len(self.neighbors)


def build_ground_truth(
    base: np.ndarray,
    queries: np.ndarray,
    fraction: float = 0.02,
    threads: Optional[int] = None,
) -> GroundTruth:
    """
    Get the nearest ``⌈fraction·n⌉`` base points of each query by Euclidean distance.

    Distances are measured in the original descriptor space. Ties at the
    cutoff go to the lower base index.
    """
    base_matrix = as_matrix(base, name="base")
    query_matrix = as_matrix(queries, name="queries")
    n = base_matrix.shape[0]
    if n == 0:
        raise EvaluationError("cannot build ground truth against an empty base")
    if not 0 < fraction <= 1:
        raise EvaluationError(f"fraction must be in (0, 1], not {fraction}")
    if query_matrix.shape[0] and query_matrix.shape[1] != base_matrix.shape[1]:
        raise EvaluationError(
            f"queries have {query_matrix.shape[1]} columns, base has {base_matrix.shape[1]}"
        )
    k = min(n, math.ceil(fraction * n - 1e-9))

    def nearest(rows: slice) -> np.ndarray:
        distances = cdist(query_matrix[rows], base_matrix, metric="sqeuclidean")
        return np.argsort(distances, axis=1, kind="stable")[:, :k]

    batches = [
        slice(start, min(start + QUERY_BATCH, query_matrix.shape[0]))
        for start in range(0, query_matrix.shape[0], QUERY_BATCH)
    ]
    parts = map_ordered(nearest, batches, threads=threads)
    neighbors = [row for part in parts for row in part]
    return GroundTruth(neighbors=neighbors, n_base=n)


def ground_truth_from_indices(indices: np.ndarray, n_base: int) -> GroundTruth:
    """Get ground truth from a precomputed neighbor table, one row per query."""
    table = np.asarray(indices)
    return GroundTruth(neighbors=[row for row in table.astype(np.int64)], n_base=n_base)


def ground_truth_from_labels(base_labels: np.ndarray, query_labels: np.ndarray) -> GroundTruth:
    """
    Get ground truth from labels: a base point is relevant when it shares a label with the query.

    :param base_labels:
        an n×l 0/1 label matrix, or n integer class ids
    :param query_labels:
        labels of the queries in the same form
    """
    base = np.asarray(base_labels, dtype=np.float64)
    queries = np.asarray(query_labels, dtype=np.float64)
    if base.ndim == 1 and queries.ndim == 1:
        classes = np.unique(np.concatenate([base, queries]))
        base = (base[:, None] == classes).astype(np.float64)
        queries = (queries[:, None] == classes).astype(np.float64)
    if base.ndim != 2 or queries.ndim != 2 or base.shape[1] != queries.shape[1]:
        raise EvaluationError(
            f"base labels {base.shape} and query labels {queries.shape} do not share label columns"
        )
    if base.shape[0] == 0:
        raise EvaluationError("cannot build ground truth against an empty base")
    neighbors: List[np.ndarray] = []
    for start in range(0, queries.shape[0], QUERY_BATCH):
        shared = queries[start : start + QUERY_BATCH] @ base.T > 0
        neighbors += [np.flatnonzero(row) for row in shared]
    logger.info(
        "label ground truth for %d queries, %.1f relevant on average",
        len(neighbors),
        np.mean([row.size for row in neighbors]) if neighbors else 0.0,
    )
    return GroundTruth(neighbors=neighbors, n_base=base.shape[0])


def average_precision(ranking: np.ndarray, truth: Iterable[int]) -> float:
    """
    Get the average of precision at the rank of each true neighbor.

    :param ranking:
        base indices ordered from best to worst match
    :param truth:
        the true neighbor indices; an empty set scores 0
    """
    truth_array = np.asarray(list(truth) if not isinstance(truth, np.ndarray) else truth)
    if truth_array.size == 0:
        logger.debug("average precision of an empty truth set is 0")
        return 0.0
    hits = np.isin(np.asarray(ranking), truth_array)
    positions = np.flatnonzero(hits) + 1
    if positions.size == 0:
        return 0.0
    precisions = np.arange(1, positions.size + 1) / positions
    return float(precisions.sum() / truth_array.size)


class EvalReport(BaseModel):
    """
    Retrieval quality of one set of codes.

    :param map:
        mean over queries of the Hamming-ranking average precision
    :param precision:
        macro-averaged precision of hash lookup within ``radius``;
        a query that retrieves nothing counts as precision 0
    :param recall:
        macro-averaged recall of hash lookup within ``radius``
    :param f1:
        F1 of the averaged precision and recall
    :param per_query_ap:
        average precision of each query
    :param radius:
        the Hamming radius used for lookup
    :param c:
        the code length
    :param n:
        the number of base points
    :param train_seconds:
        wall time spent training the model, when known
    :param encode_seconds:
        wall time spent hashing the base and query sets, when known
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    map: float
    precision: float
    recall: float
    f1: float
    per_query_ap: np.ndarray
    radius: int
    c: int
    n: int
    method: str = ""
    seed: Optional[int] = None
    train_seconds: Optional[float] = None
    encode_seconds: Optional[float] = None

    def to_row(self, **extra) -> Dict[str, object]:
        """Get a CSV row with the standard report columns plus any extras."""
        row: Dict[str, object] = {
            "method": self.method,
            "c": self.c,
            "map": self.map,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "radius": self.radius,
            "n": self.n,
            "seed": "" if self.seed is None else self.seed,
        }
        if self.train_seconds is not None:
            row["train_seconds"] = self.train_seconds
        if self.encode_seconds is not None:
            row["encode_seconds"] = self.encode_seconds
        row.update(extra)
        return row

    def __str__(self) -> str:
        return (
            f"MAP {self.map:.4f}, precision {self.precision:.4f}, recall {self.recall:.4f}, "
            f"F1 {self.f1:.4f} at radius {self.radius} ({self.c} bits)"
        )


def f1_score(precision: float, recall: float) -> float:
    """Get the harmonic mean of precision and recall, or 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _score_query(
    query: np.ndarray, base_codes: CodeMatrix, truth: np.ndarray, radius: int
) -> Tuple[float, float, float]:
    distances = hamming_to_all(query, base_codes)
    ranking = np.argsort(distances, kind="stable")
    ap = average_precision(ranking, truth)
    retrieved = np.flatnonzero(distances <= radius)
    found = np.count_nonzero(np.isin(retrieved, truth))
    precision = found / retrieved.size if retrieved.size else 0.0
    recall = found / truth.size if truth.size else 0.0
    return ap, precision, recall


def evaluate(
    base_codes: CodeMatrix,
    query_codes: CodeMatrix,
    truth: GroundTruth,
    radius: int = 2,
    threads: Optional[int] = None,
) -> EvalReport:
    """
    Score query codes against base codes with Hamming ranking and hash lookup.

    :param base_codes:
        codes of the database points
    :param query_codes:
        codes of the queries, one per ground-truth entry
    :param truth:
        the true neighbors of every query
    :param radius:
        the hash-lookup Hamming radius
    """
    c = require_same_length(base_codes, query_codes)
    if len(truth) != query_codes.n:
        raise EvaluationError(f"{query_codes.n} query codes but {len(truth)} ground-truth rows")
    if truth.n_base != base_codes.n:
        raise EvaluationError(
            f"ground truth refers to {truth.n_base} base points, codes hold {base_codes.n}"
        )

    def score(rows: slice) -> List[Tuple[float, float, float]]:
        return [
            _score_query(query_codes.row(i), base_codes, truth.neighbors[i], radius)
            for i in range(rows.start, rows.stop)
        ]

    workers = resolve_threads(threads)
    parts = map_ordered(score, row_chunks(query_codes.n, workers), threads=workers)
    scores = np.array([s for part in parts for s in part], dtype=np.float64).reshape(-1, 3)
    if scores.shape[0] == 0:
        raise EvaluationError("no queries to evaluate")
    precision = float(scores[:, 1].mean())
    recall = float(scores[:, 2].mean())
    report = EvalReport(
        map=float(scores[:, 0].mean()),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        per_query_ap=scores[:, 0].copy(),
        radius=radius,
        c=c,
        n=base_codes.n,
    )
    logger.info("%s", report)
    return report


def affinity_loss_diagnostic(points: np.ndarray, codes: CodeMatrix) -> float:
    """
    Get ``Σ_{i<i′} exp(−‖y_i − y_i′‖²)·hamming(b_i, b_i′)``.

    Nearby points with different codes make this large. The cost is
    quadratic in n, so it is limited to small samples.
    """
    y = as_matrix(points, name="points")
    if y.shape[0] > DIAGNOSTIC_LIMIT:
        raise EvaluationError(f"diagnostic capped at {DIAGNOSTIC_LIMIT} points, got {y.shape[0]}")
    if y.shape[0] != codes.n:
        raise EvaluationError(f"{y.shape[0]} points but {codes.n} codes")
    if y.shape[0] < 2:
        return 0.0
    weights = np.exp(-pdist(y, metric="sqeuclidean"))
    disagreements = np.rint(pdist(codes.to_bits(), metric="hamming") * codes.c)
    return float(weights @ disagreements)


def code_correlation(codes: CodeMatrix) -> float:
    """Get the largest ``|h_jᵀh_j′|/n`` over pairs of distinct code columns."""
    signs = codes.to_signs().astype(np.float64)
    gram = signs.T @ signs / max(codes.n, 1)
    np.fill_diagonal(gram, 0.0)
    return float(np.abs(gram).max(initial=0.0))


def mean_code_correlation(codes: CodeMatrix) -> float:
    """Get the mean of ``h_jᵀh_j′/n`` over pairs of distinct code columns."""
    signs = codes.to_signs().astype(np.float64)
    gram = signs.T @ signs / max(codes.n, 1)
    c = codes.c
    if c < 2:
        return 0.0
    return float((gram.sum() - np.trace(gram)) / (c * (c - 1)))


def axis_satellite_codes(d: int, n: int, rs_factor: float, seed: int = 0) -> CodeMatrix:
    """
    Hash points uniform in the unit d-ball with satellites on the coordinate axes.

    Satellites sit at ``rs_factor`` times the ball radius; thresholds are
    the medians of the sample.
    """
    if d < 2:
        raise EvaluationError(f"d must be at least 2, not {d}")
    points, _ = make_synthetic("uniform_ball", n=n, d=d, seed=seed)
    satellites = rs_factor * np.eye(d)
    constellation = Constellation(
        satellites=satellites,
        thresholds=fit_thresholds(points, satellites),
        groups=[(0, d)],
        r_s=rs_factor,
    )
    return encode(points, constellation)


def theorem1_test(d: int, n: int, rs_factor: float, seed: int = 0) -> float:
    """
    Measure how close median-threshold codes of orthogonal satellites come to orthogonal.

    As ``rs_factor`` grows the code columns of :func:`axis_satellite_codes`
    become uncorrelated.

    :returns:
        the largest ``|h_jᵀh_j′|/n`` over pairs of satellites
    """
    return code_correlation(axis_satellite_codes(d, n, rs_factor, seed))


def write_report_csv(rows: List[Dict[str, object]], out: Optional[TextIO] = None) -> None:
    """Write report rows with the standard columns first, then any extras."""
    fieldnames = list(REPORT_COLUMNS)
    for row in rows:
        fieldnames += [key for key in row if key not in fieldnames]
    writer = csv.DictWriter(out or sys.stdout, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
