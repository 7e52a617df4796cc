"""Process-level fan-out for embarrassingly parallel design evaluations.

Grid points are independent work items; results always come back in
submission order, so a fixed grid yields identical output regardless of the
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def ordered_map(func, items, workers: int = 1):
    """map() preserving order, optionally across processes.

    ``func`` must be a module-level callable and every item picklable when
    ``workers`` > 1.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items, chunksize=1))
