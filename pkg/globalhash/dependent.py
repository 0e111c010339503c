"""Data-dependent satellite placement by quantization-loss minimization."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_validator

from globalhash.codes import CodeMatrix
from globalhash.constellation import (
    Constellation,
    SatelliteConfig,
    d2s,
    encode_distances,
    fit_thresholds,
)
from globalhash.kernels import KernelError, as_matrix, as_vector, solve_quadratic, svd
from globalhash.workers import map_ordered

logger = logging.getLogger(__name__)


class TrainingError(ValueError):
    """Error for training inputs that cannot produce a constellation."""

    pass


class TrainConfigDD(SatelliteConfig):
    """
    Settings for data-dependent training.

    :param epsilon:
        stop when the loss changes by less than this between iterations;
        defaults to ``1e-4·n·c``
    :param max_iter:
        the most update cycles to run
    :param ridge:
        the ridge added to the normal matrix of each GPS solve
    """

    epsilon: Optional[float] = None
    max_iter: int = 50
    ridge: float = 1e-10

    @field_validator("max_iter")
    def max_iter_must_be_positive(cls, v: int) -> int:
        """Require at least one iteration."""
        if v < 1:
            raise ValueError(f"max_iter must be at least 1, not {v}")
        return v


class DDState(BaseModel):
    r"""
    The variables of the grouped quantization loss during training.

    :param satellites:
        the c×d initial satellite positions ``s_j``
    :param rotations:
        one d×d orthogonal matrix ``R_k`` per group
    :param groups:
        ``(start, length)`` satellite ranges, one per rotation
    :param alpha:
        per-satellite scale applied to distances
    :param beta:
        per-satellite shift applied to codes
    :param codes:
        the current code matrix ``B``
    :param objective:
        the loss of this state
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    satellites: np.ndarray
    rotations: List[np.ndarray]
    groups: List[Tuple[int, int]]
    alpha: np.ndarray
    beta: np.ndarray
    codes: Optional[CodeMatrix] = None
    objective: float = float("nan")


class TrainingReport(BaseModel):
    """
    What happened during one call to :func:`train_dd`.

    :param objective:
        the loss before the first cycle followed by the loss after each cycle
    :param gps_fallbacks:
        per cycle, how many satellites kept their previous position
        because the GPS solve had no real root
    :param negative_alpha:
        per cycle, how many alpha values came out negative
    :param seconds:
        wall time of each cycle
    """

    objective: List[float] = []
    gps_fallbacks: List[int] = []
    negative_alpha: List[int] = []
    seconds: List[float] = []
    converged: bool = False

    @property
    def iterations(self) -> int:
        """Get the number of completed update cycles."""
        return len(self.seconds)

    def __str__(self) -> str:
        tail = ", ".join(f"{value:.6g}" for value in self.objective[-3:])
        status = "converged" if self.converged else "stopped"
        return (
            f"{status} after {self.iterations} iterations; loss tail [{tail}]; "
            f"{sum(self.gps_fallbacks)} GPS fallbacks; {sum(self.seconds):.2f}s"
        )


def random_orthonormal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Get the left singular vectors of a random d×d matrix."""
    u, _, _ = svd(rng.standard_normal((d, d)))
    return u


def init_group(d: int, size: int, r_s: float, rng: np.random.Generator) -> np.ndarray:
    """
    Get the starting satellites of one group.

    The first ``min(size, d)`` rows are mutually orthogonal; a group of
    ``d + 1`` gets one more random direction. Every row has norm ``r_s``.
    """
    if not 1 <= size <= d + 1:
        raise TrainingError(f"group size must be between 1 and {d + 1}, not {size}")
    rows = random_orthonormal(d, rng).T[: min(size, d)]
    if size == d + 1:
        extra = rng.standard_normal(d)
        rows = np.vstack([rows, extra / np.linalg.norm(extra)])
    return rows * r_s


def effective_satellites(state: DDState) -> np.ndarray:
    """Get every satellite with its group's rotation applied, ``s_j R_k``."""
    result = np.empty_like(state.satellites)
    for (start, length), rotation in zip(state.groups, state.rotations):
        result[start : start + length] = state.satellites[start : start + length] @ rotation
    return result


def _signs(state: DDState) -> np.ndarray:
    if state.codes is None:
        raise TrainingError("state has no codes yet; run update_codes first")
    return state.codes.to_signs().astype(np.float64)


def loss(points: np.ndarray, state: DDState) -> float:
    """Get ``Σ_i Σ_j (B_ij + β_j − α_j‖y_i − s_j R_k‖)²``."""
    distances = d2s(points, effective_satellites(state))
    residual = _signs(state) + state.beta - state.alpha * distances
    return float(np.sum(residual * residual))


def update_codes(points: np.ndarray, state: DDState) -> CodeMatrix:
    """Recompute B from the rotated satellites with fresh median thresholds."""
    satellites = effective_satellites(state)
    distances = d2s(points, satellites)
    return encode_distances(distances, fit_thresholds(points, satellites))


def update_alpha(points: np.ndarray, state: DDState) -> np.ndarray:
    """
    Get the loss-minimizing scale for each satellite's distances.

    A satellite whose distances are all zero keeps its previous alpha.
    """
    distances = d2s(points, effective_satellites(state))
    numerator = np.sum((_signs(state) + state.beta) * distances, axis=0)
    denominator = np.sum(distances * distances, axis=0)
    safe = denominator > 0
    alpha = state.alpha.copy()
    alpha[safe] = numerator[safe] / denominator[safe]
    return alpha


def update_beta(points: np.ndarray, state: DDState) -> np.ndarray:
    """Get the loss-minimizing shift for each satellite's codes."""
    distances = d2s(points, effective_satellites(state))
    return np.mean(state.alpha * distances - _signs(state), axis=0)


def _lorentz(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[:-1] @ b[:-1] - a[-1] * b[-1])


def gps_solve_satellite(
    points: np.ndarray, bprime_col: np.ndarray, r_s: float, ridge: float = 1e-10
) -> Optional[np.ndarray]:
    r"""
    Place one satellite so that its distances to the points match targets.

    The points act as GPS anchors and the targets as measured ranges.
    The range offset τ solved alongside the position is discarded.

    :param points:
        an n×d matrix, n ≥ d+1
    :param bprime_col:
        target distance for each point, ``(B_ij + β_j)/α_j``
    :param r_s:
        the satellite radius; of two candidate positions the one whose
        norm is closer to ``r_s`` wins
    :param ridge:
        added to the diagonal of the normal matrix
    :returns:
        the new satellite position, or ``None`` when the quadratic
        has no real root
    """
    y = as_matrix(points, name="points")
    targets = as_vector(bprime_col, name="targets")
    n, d = y.shape
    if targets.shape[0] != n:
        raise TrainingError(f"{n} points but {targets.shape[0]} target distances")
    if n < d + 1:
        raise TrainingError(f"GPS solve needs at least {d + 1} points, got {n}")
    augmented = np.column_stack([y, targets])
    metric = np.ones(d + 1)
    metric[-1] = -1.0
    half_norms = 0.5 * (augmented * augmented) @ metric
    normal = augmented.T @ augmented + ridge * np.eye(d + 1)
    rhs = augmented.T @ np.column_stack([np.ones(n), half_norms])
    try:
        solved = scipy.linalg.solve(normal, rhs, assume_a="pos")
    except np.linalg.LinAlgError as err:
        raise TrainingError(f"GPS normal matrix is singular: {err}") from err
    unit_part, norm_part = solved[:, 0], solved[:, 1]
    try:
        roots = solve_quadratic(
            _lorentz(unit_part, unit_part),
            2.0 * (_lorentz(norm_part, unit_part) - 1.0),
            _lorentz(norm_part, norm_part),
        )
    except KernelError:
        return None
    if not roots:
        return None
    candidates = [metric * (norm_part + root * unit_part) for root in roots]
    best = min(candidates, key=lambda s: abs(np.linalg.norm(s[:d]) - r_s))
    return best[:d]


def procrustes_rotation(s_prime: np.ndarray, satellites: np.ndarray) -> np.ndarray:
    """
    Get the orthogonal R minimizing ``Σ_j ‖s′_j − s_j R‖²``.

    :param s_prime:
        m×d target positions
    :param satellites:
        m×d unrotated positions
    """
    target = as_matrix(s_prime, name="s_prime")
    source = as_matrix(satellites, name="satellites")
    if target.shape != source.shape:
        raise TrainingError(f"shapes differ: {target.shape} vs {source.shape}")
    u, _, v = svd(source.T @ target)
    return u @ v.T


def initial_state(
    points: np.ndarray,
    satellites: np.ndarray,
    rotations: List[np.ndarray],
    groups: List[Tuple[int, int]],
) -> DDState:
    """Get a state with α = 1, β = 0 and codes from the starting satellites."""
    c = satellites.shape[0]
    state = DDState(
        satellites=satellites,
        rotations=rotations,
        groups=groups,
        alpha=np.ones(c),
        beta=np.zeros(c),
    )
    state.codes = update_codes(points, state)
    state.objective = loss(points, state)
    return state


def _rotation_step(points: np.ndarray, state: DDState, cfg: TrainConfigDD) -> Tuple[int, int]:
    """Move every group's rotation toward the GPS-solved positions."""
    current = effective_satellites(state)
    usable = np.abs(state.alpha) > 1e-12
    targets = (_signs(state) + state.beta) / np.where(usable, state.alpha, 1.0)

    def solve(j: int) -> Optional[np.ndarray]:
        if not usable[j]:
            return None
        return gps_solve_satellite(points, targets[:, j], cfg.r_s, cfg.ridge)

    solved = map_ordered(solve, list(range(current.shape[0])), threads=cfg.threads)
    s_prime = current.copy()
    fallbacks = 0
    for j, position in enumerate(solved):
        if position is None:
            fallbacks += 1
        else:
            s_prime[j] = position
    state.rotations = [
        procrustes_rotation(
            s_prime[start : start + length], state.satellites[start : start + length]
        )
        for start, length in state.groups
    ]
    negative = int(np.count_nonzero(state.alpha < 0))
    return fallbacks, negative


def train_dd(
    points: np.ndarray, cfg: TrainConfigDD
) -> Tuple[Constellation, TrainingReport]:
    """
    Train satellites on embedded data by minimizing the grouped quantization loss.

    Each cycle updates B, then α, then β, then solves a GPS problem for
    every satellite and fits each group's rotation to the solutions.

    :param points:
        an n×d matrix of embedded training points
    :param cfg:
        training settings; ``cfg.rho`` is only recorded, the group layout
        follows from ``d`` and ``cfg.extra_anchor``
    :returns:
        the constellation with rotations folded into the satellites and
        thresholds refit, plus a report of the run
    """
    y = as_matrix(points, name="points")
    n, d = y.shape
    if n < d + 2:
        raise TrainingError(f"training needs at least d+2={d + 2} points, got {n}")
    size = d + 1 if cfg.extra_anchor else d
    groups = [(start, min(size, cfg.c - start)) for start in range(0, cfg.c, size)]
    rng = np.random.default_rng(cfg.seed)
    satellites = np.vstack([init_group(d, length, cfg.r_s, rng) for _, length in groups])
    rotations = [random_orthonormal(d, rng) for _ in groups]
    epsilon = cfg.epsilon if cfg.epsilon is not None else 1e-4 * n * cfg.c

    state = initial_state(y, satellites, rotations, groups)
    report = TrainingReport(objective=[state.objective])
    logger.info("initial loss %.6g over %d points, %d groups", state.objective, n, len(groups))

    for iteration in range(1, cfg.max_iter + 1):
        started = time.perf_counter()
        state.codes = update_codes(y, state)
        state.alpha = update_alpha(y, state)
        state.beta = update_beta(y, state)
        fallbacks, negative = _rotation_step(y, state, cfg)
        previous = state.objective
        state.objective = loss(y, state)

        report.objective.append(state.objective)
        report.gps_fallbacks.append(fallbacks)
        report.negative_alpha.append(negative)
        report.seconds.append(time.perf_counter() - started)
        logger.info(
            "iteration %d loss %.6g gps fallbacks %d", iteration, state.objective, fallbacks
        )
        if negative:
            logger.warning("iteration %d: %d satellites have negative alpha", iteration, negative)
        if abs(previous - state.objective) < epsilon:
            report.converged = True
            break

    final = effective_satellites(state)
    constellation = Constellation(
        satellites=final,
        thresholds=fit_thresholds(y, final),
        groups=groups,
        r_s=cfg.r_s,
        rho=cfg.rho,
    )
    return constellation, report


def write_trace_csv(report: TrainingReport, path: Union[str, Path]) -> None:
    """Write one row per cycle: iteration, E, GPS fallbacks, wall time."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "E", "gps_fallbacks", "seconds"])
        writer.writerow([0, repr(report.objective[0]), 0, 0.0])
        for i in range(report.iterations):
            writer.writerow(
                [i + 1, repr(report.objective[i + 1]), report.gps_fallbacks[i], report.seconds[i]]
            )
