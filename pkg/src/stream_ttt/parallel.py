"""Order-preserving map over independent jobs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, jobs: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally spread over ``jobs`` processes.

    Results are returned in input order regardless of completion order, so
    output assembled from them does not depend on ``jobs``.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
