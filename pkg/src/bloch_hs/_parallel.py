"""Order-preserving thread pool capped by ``BLOCH_HS_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("BLOCH_HS_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """``[fn(x) for x in items]``, evaluated concurrently when allowed."""
    items = list(items)
    n = min(max_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
