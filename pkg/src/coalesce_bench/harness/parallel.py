"""Replicate-parallel execution with a scheduling-independent result order."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

CHUNK_SIZE = 8192


def chunk_bounds(reps: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    return [(lo, min(lo + chunk_size, reps)) for lo in range(0, reps, chunk_size)]


def map_chunks(fn: Callable[[int, int], T], reps: int, threads: int = 1,
               chunk_size: int = CHUNK_SIZE) -> list[T]:
    """Run ``fn(lo, hi)`` over fixed replicate chunks.

    Chunk boundaries depend only on ``reps`` and ``chunk_size``, and results
    come back in chunk order, so the worker count never changes the output.
    """
    bounds = chunk_bounds(reps, chunk_size)
    if threads <= 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def concat_chunks(fn: Callable[[int, int], dict], reps: int, threads: int = 1,
                  chunk_size: int = CHUNK_SIZE) -> dict[str, np.ndarray]:
    """Like :func:`map_chunks` for functions returning dicts of per-replicate arrays."""
    parts = map_chunks(fn, reps, threads, chunk_size)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
