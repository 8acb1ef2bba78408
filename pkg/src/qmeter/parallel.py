"""Worker-count handling and deterministic reductions."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "QMETER_THREADS"


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_blocks(fn, blocks, workers: int | None = None) -> list:
    """``[fn(b) for b in blocks]``, possibly on a thread pool; result order follows ``blocks``."""
    blocks = list(blocks)
    n = min(worker_count(workers), len(blocks))
    if n <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, blocks))


def exact_sum(values) -> float:
    """Correctly rounded sum of real values; independent of ordering."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def exact_mean(values) -> complex | float:
    """Correctly rounded mean; complex input is reduced part by part."""
    v = np.asarray(values)
    n = v.size
    if np.iscomplexobj(v):
        return complex(exact_sum(v.real) / n, exact_sum(v.imag) / n)
    return exact_sum(v) / n
