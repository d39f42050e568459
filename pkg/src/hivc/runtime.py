"""Process-wide knobs: worker thread count for per-channel work.

Most of the heavy lifting is numpy code that releases the GIL, so a
small thread pool pays off for the per-channel solves and warps.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_num_threads = 1


def set_num_threads(n: int):
    global _num_threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def default_threads() -> int:
    """Resolve the startup default from the HIVC_THREADS variable."""
    env = os.environ.get("HIVC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_tasks(fn, items):
    """Apply fn over items, threaded when more than one worker is set."""
    items = list(items)
    if _num_threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(_num_threads, len(items))) as pool:
        return list(pool.map(fn, items))
