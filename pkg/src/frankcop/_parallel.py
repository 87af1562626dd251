"""Index-ordered parallel map with one random stream per replication."""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def default_threads() -> int:
    return os.cpu_count() or 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for replication ``key`` under ``seed``.

    Streams depend only on ``(seed, key)``, never on scheduling, which is what
    makes parallel runs reproducible.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def theta_key(theta: float) -> int:
    """Nonnegative integer tag for ``|theta|`` (mirrored cells share streams)."""
    return int(round(abs(float(theta)) * 1_000_000))


def _run_chunk(func, indices):
    return [func(i) for i in indices]


def indexed_map(func, count: int, threads: int | None = 1, chunk: int = 64) -> list:
    """``[func(i) for i in range(count)]``, optionally across processes.

    Results are returned in index order, so the output does not depend on
    ``threads``.  ``func`` must be picklable.
    """
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1 or count <= chunk:
        return [func(i) for i in range(count)]
    chunks = [range(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    ctx = multiprocessing.get_context("fork") if hasattr(os, "fork") else None
    out: list = []
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
        for part in pool.map(_run_chunk, [func] * len(chunks), chunks):
            out.extend(part)
    return out
