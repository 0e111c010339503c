"""Worker-count resolution and row partitioning for threaded phases."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "GHS_THREADS"

T = TypeVar("T")


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Get the number of worker threads to use.

    :param threads:
        an explicit worker count, e.g. from the ``--threads`` flag.
        When omitted, the ``GHS_THREADS`` environment variable is used,
        and then a single thread.
    """
    if threads is not None:
        return max(1, int(threads))
    from_env = os.getenv(THREADS_ENV_VAR, "").strip()
    if from_env:
        try:
            return max(1, int(from_env))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV_VAR, from_env)
    return 1


def row_chunks(n: int, threads: int) -> List[slice]:
    """Split ``range(n)`` into at most ``threads`` contiguous slices."""
    if n <= 0:
        return []
    parts = max(1, min(threads, n))
    bounds = [round(k * n / parts) for k in range(parts + 1)]
    return [slice(bounds[k], bounds[k + 1]) for k in range(parts)]


def map_ordered(
    func: Callable[[T], object], items: Sequence[T], threads: Optional[int] = None
) -> List:
    """
    Apply ``func`` to every item and return results in input order.

    Results never depend on scheduling: each item's output lands in its own slot.
    """
    workers = resolve_threads(threads)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
