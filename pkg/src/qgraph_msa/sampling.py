"""
Monte-Carlo plumbing: worker pool, per-sample streams, standard errors and the
one-sided PASS rules for empirical probabilities.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")

WORKERS_ENV = "QGRAPH_WORKERS"


def worker_count(workers: Optional[int] = None) -> int:
    """Explicit worker count, else QGRAPH_WORKERS, else 1."""
    if workers is None:
        workers = int(os.getenv(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def map_samples(
    task: Callable[[int], T], n_samples: int, workers: Optional[int] = None
) -> List[T]:
    """Run task(sample_index) for every sample; results come back in sample order."""
    if n_samples < 1:
        raise ValueError(f"sample count must be >= 1, got {n_samples}")
    workers = worker_count(workers)
    if workers == 1:
        return [task(k) for k in range(n_samples)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_samples)))


def sample_stream(seed: int, sample_index: int, channel: int = 0) -> np.random.Generator:
    """Generator for auxiliary draws of one sample (ball centers, trial vectors)."""
    return np.random.Generator(
        np.random.Philox(
            np.random.SeedSequence(seed, spawn_key=(int(sample_index), 1 << 30, int(channel)))
        )
    )


def standard_error(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n) if n > 0 else 0.0


def frequency(flags: Iterable[bool]) -> float:
    flags = list(flags)
    return sum(bool(f) for f in flags) / len(flags) if flags else 0.0


def passes_upper_bound(p_hat: float, se: float, bound: float) -> bool:
    """PASS iff bound >= p_hat - 2 SE."""
    return bound >= p_hat - 2.0 * se


def passes_lower_bound(p_hat: float, se: float, bound: float) -> bool:
    """PASS iff p_hat + 2 SE >= bound."""
    return p_hat + 2.0 * se >= bound
