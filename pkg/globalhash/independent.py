"""Data-independent satellite placement on a sphere by gradient projection."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, field_validator

from globalhash.constellation import Constellation, SatelliteConfig, fit_thresholds
from globalhash.kernels import as_matrix

logger = logging.getLogger(__name__)

MAX_STEP = 1e6
MIN_STEP = 1e-12


class TrainConfigDI(SatelliteConfig):
    """
    Settings for data-independent satellite placement.

    :param step:
        the starting ascent step Δt; defaults to ``0.01/c``
    :param max_iter:
        the most projected-gradient iterations to attempt
    :param tol:
        stop when an accepted step changes E by less than ``tol·E``
    """

    step: Optional[float] = None
    max_iter: int = 1000
    tol: float = 1e-9

    @field_validator("step")
    def step_must_be_positive(cls, v: Optional[float]) -> Optional[float]:
        """Reject non-positive step sizes."""
        if v is not None and not v > 0:
            raise ValueError(f"step must be positive, not {v}")
        return v


class DITrace(BaseModel):
    """
    The objective history of one call to :func:`train_di`.

    :param objective:
        E before the first step, then after each accepted step
    :param centroid_norm:
        the norm of the satellites' mean at the same points
    :param rerandomized:
        how many half-step rows were zero and got a fresh random direction
    :param rejected:
        how many steps lowered E and were retried with half the step
    """

    objective: List[float] = []
    centroid_norm: List[float] = []
    rerandomized: int = 0
    rejected: int = 0
    converged: bool = False


def di_objective(satellites: np.ndarray) -> float:
    """Get the sum of squared distances over all pairs of satellites."""
    s = as_matrix(satellites, name="satellites")
    c = s.shape[0]
    total = s.sum(axis=0)
    return float(c * np.sum(s * s) - total @ total)


def di_gradient(satellites: np.ndarray, j: int) -> np.ndarray:
    """
    Get the gradient of :func:`di_objective` with respect to satellite ``j``.

    This is the symmetric derivative ``(c − 1)s_j − Σ_{j′≠j} s_{j′}``.
    The ascent rule is sometimes written ``(c − j)s_j − Σ_{j′>j} s_{j′}``,
    which differentiates only part of the sum.
    """
    s = as_matrix(satellites, name="satellites")
    return s.shape[0] * s[j] - s.sum(axis=0)


def _all_gradients(s: np.ndarray) -> np.ndarray:
    return s.shape[0] * s - s.sum(axis=0)


def riemannian_gradient_norms(satellites: np.ndarray) -> np.ndarray:
    """Get the norm of each gradient's component tangent to the sphere."""
    s = as_matrix(satellites, name="satellites")
    gradients = _all_gradients(s)
    radial = np.sum(gradients * s, axis=1) / np.sum(s * s, axis=1)
    return np.linalg.norm(gradients - radial[:, None] * s, axis=1)


def _to_sphere(rows: np.ndarray, r_s: float) -> np.ndarray:
    return r_s * rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _centroid_norm(s: np.ndarray) -> float:
    return float(np.linalg.norm(s.mean(axis=0)))


def train_di(d: int, cfg: TrainConfigDI) -> Tuple[np.ndarray, DITrace]:
    """
    Spread ``cfg.c`` satellites over the radius-``r_s`` sphere in ``d`` dimensions.

    Every satellite takes a synchronous ascent step along its gradient and is
    projected back to the sphere. A step that lowers E is retried with half
    the step size; an accepted step doubles it.

    :returns:
        a c×d satellite matrix and the objective trace
    """
    if d < 1:
        raise ValueError(f"d must be at least 1, not {d}")
    rng = np.random.default_rng(cfg.seed)
    s = _to_sphere(rng.standard_normal((cfg.c, d)), cfg.r_s)
    step = cfg.step if cfg.step is not None else 0.01 / cfg.c
    energy = di_objective(s)
    trace = DITrace(objective=[energy], centroid_norm=[_centroid_norm(s)])

    for _ in range(cfg.max_iter):
        half = s + step * _all_gradients(s)
        norms = np.linalg.norm(half, axis=1)
        zero = norms == 0
        if np.any(zero):
            trace.rerandomized += int(zero.sum())
            half[zero] = rng.standard_normal((int(zero.sum()), d))
        candidate = _to_sphere(half, cfg.r_s)
        candidate_energy = di_objective(candidate)
        if candidate_energy < energy:
            trace.rejected += 1
            step /= 2
            if step < MIN_STEP:
                trace.converged = True
                break
            continue
        change = candidate_energy - energy
        s, energy = candidate, candidate_energy
        trace.objective.append(energy)
        trace.centroid_norm.append(_centroid_norm(s))
        step = min(step * 2, MAX_STEP)
        if change <= cfg.tol * max(energy, np.finfo(float).tiny):
            trace.converged = True
            break

    logger.info(
        "DI placement: E %.6g after %d steps, centroid norm %.3g",
        energy,
        len(trace.objective) - 1,
        trace.centroid_norm[-1],
    )
    return s, trace


def build_di_constellation(
    points: np.ndarray, cfg: TrainConfigDI
) -> Tuple[Constellation, DITrace]:
    """Place satellites data-independently, then fit thresholds on the data."""
    y = as_matrix(points, name="points")
    satellites, trace = train_di(y.shape[1], cfg)
    constellation = Constellation(
        satellites=satellites,
        thresholds=fit_thresholds(y, satellites),
        groups=[(0, cfg.c)] if cfg.c <= y.shape[1] + 1 else _groups(cfg.c, y.shape[1]),
        r_s=cfg.r_s,
        rho=cfg.rho,
    )
    return constellation, trace


def _groups(c: int, d: int) -> List[Tuple[int, int]]:
    return [(start, min(d + 1, c - start)) for start in range(0, c, d + 1)]


def write_trace_csv(trace: DITrace, path: Union[str, Path]) -> None:
    """Write one row per accepted step: iteration, E, centroid norm."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "E", "centroid_norm"])
        for i, (energy, centroid) in enumerate(zip(trace.objective, trace.centroid_norm)):
            writer.writerow([i, repr(energy), repr(centroid)])
