"""Replica blocks and an order-preserving mapper.

Replicas are split into fixed-size blocks that never depend on the worker
count; results come back in block order, so every downstream reduction sees
the same arrays whether one or many processes ran them.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

BLOCK_SIZE = 256


def replica_blocks(n_rep, block_size=BLOCK_SIZE, start=0):
    return [range(i, min(i + block_size, start + n_rep)) for i in range(start, start + n_rep, block_size)]


def default_jobs():
    return os.cpu_count() or 1


def map_blocks(fn, tasks, jobs=1):
    """list(map(fn, tasks)), optionally across processes; fn must be picklable."""
    tasks = list(tasks)
    if jobs is None:
        jobs = default_jobs()
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def concat(results, key):
    return np.concatenate([np.asarray(r[key]) for r in results], axis=0)
