"""Seeded substreams and an order-preserving thread map.

Every stochastic routine splits its work into fixed-size chunks and draws
chunk ``c`` from ``SeedSequence(seed, spawn_key=(tag, c))``. Chunk size never
depends on the thread count, so results are identical for any ``threads``.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 1 << 15

# stream tags; one per consumer so substreams never collide
TAG_ATTRACTOR = 1
TAG_WORDS = 2
TAG_LYAPUNOV = 3
TAG_FURSTENBERG = 4
TAG_COMPONENT = 5
TAG_SEPARATION = 6
TAG_CONVOLVE = 7
TAG_FIBER = 8
TAG_IRREDUCIBLE = 9
TAG_EXPERIMENT = 10
TAG_DIRECTIONS = 11


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("AFFDIM_THREADS", "1") or 1)
    return max(1, int(threads))


def substream(seed, *key):
    if seed is None:
        raise ValueError("a seed is required for stochastic operations")
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    )


def chunk_bounds(total, chunk=CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def parallel_map(fn, items, threads=None):
    """``list(map(fn, items))`` with an optional thread pool; order is kept."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
