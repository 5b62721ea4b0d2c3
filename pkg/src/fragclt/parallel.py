"""Ordered process-pool map with a serial fast path."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def pmap(func: Callable, items: Iterable, jobs: int = 1) -> list:
    """Map ``func`` over ``items`` preserving order.

    ``func`` and the items must be picklable when ``jobs > 1``. Results
    are collected in input order, so reductions are deterministic.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(func, items))
