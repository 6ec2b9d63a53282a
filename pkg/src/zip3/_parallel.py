"""Order-preserving map over independent tasks, optionally across processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for task ``key`` under root ``seed``.

    The stream depends only on ``(seed, key)``, never on scheduling.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def resolve_jobs(n_jobs) -> int:
    if n_jobs is None or n_jobs == 1:
        return 1
    if n_jobs == 0:
        raise ValueError("n_jobs must be a positive count or negative for all cores")
    if n_jobs < 0:
        return max(os.cpu_count() or 1, 1)
    return int(n_jobs)


def pmap(func, tasks, n_jobs=1, chunksize: int = 8):
    """``list(map(func, tasks))``, fanned out over ``n_jobs`` worker processes.

    ``func`` must be picklable (module level) when ``n_jobs != 1``.
    """
    tasks = list(tasks)
    jobs = resolve_jobs(n_jobs)
    if jobs == 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=chunksize))
