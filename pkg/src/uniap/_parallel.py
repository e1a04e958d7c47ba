"""Fixed-chunk worker-pool mapping.

Chunk boundaries depend only on the problem size, never on the worker count,
so numeric results are identical for any pool size.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def chunk_bounds(n: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def map_chunks(fn, bounds, workers: int) -> list:
    """Apply fn(start, stop) per chunk, results in chunk order."""
    if workers <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
