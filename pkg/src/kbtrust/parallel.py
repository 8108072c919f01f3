"""Deterministic sharded map.

Work is sharded over a worker pool in stable input order and merged back
in that same order, so results are identical for any worker count.  Each
task function must be a picklable module-level callable over plain data.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(requested=None) -> int:
    """Worker count from an explicit request or KBTRUST_WORKERS, min 1."""
    if requested is None:
        requested = os.environ.get("KBTRUST_WORKERS", "1")
    try:
        return max(1, int(requested))
    except (TypeError, ValueError):
        return 1


class ShardMapper:
    """Order-preserving map over shards, serial when workers == 1."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, workers)
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def map(self, fn, items):
        items = list(items)
        if self._pool is None or len(items) < 2 * self.workers:
            return [fn(x) for x in items]
        chunk = max(1, len(items) // (4 * self.workers))
        return list(self._pool.map(fn, items, chunksize=chunk))
