"""Deterministic chunked random streams.

Draw ``n`` items in chunks of ``CHUNK`` items; chunk ``i`` uses the
generator seeded by ``SeedSequence(seed, spawn_key=(i,))``.  Results do
not depend on the number of worker threads, only on ``(seed, n, CHUNK)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK = 65536
THREADS_ENV = "RARE_TAIL_THREADS"


def worker_count() -> int:
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))))


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[np.random.Generator, int], object], n: int, seed: int,
               threads: int | None = None, chunk: int = CHUNK) -> list:
    """Apply ``fn(rng, size)`` to every chunk, in order."""
    sizes = chunk_sizes(n, chunk)
    threads = worker_count() if threads is None else max(1, int(threads))
    jobs = [(i, s) for i, s in enumerate(sizes)]
    if threads == 1 or len(jobs) <= 1:
        return [fn(chunk_rng(seed, i), s) for i, s in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
        return list(ex.map(lambda js: fn(chunk_rng(seed, js[0]), js[1]), jobs))
