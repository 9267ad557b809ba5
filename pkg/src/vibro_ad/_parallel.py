"""Thread fan-out capped by the VIBRO_AD_THREADS environment variable."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("VIBRO_AD_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items) -> list:
    """``[fn(x) for x in items]``, threaded when more than one thread is allowed."""
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))
