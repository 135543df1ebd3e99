"""Seed derivation and deterministic chunked execution.

Every random quantity in the package is drawn from a generator addressed by
``(master_seed, tag, index)``.  The derivation is fixed::

    SeedSequence(entropy=master_seed, spawn_key=(tag, index)) -> Philox

``tag`` separates independent ensembles (e.g. ``R`` versus ``R'`` in the
fixed-point test) and ``index`` is the chunk number.  Work is cut into chunks
of a fixed size, so the draws a path sees never depend on how many workers
run the chunks, and partial results are always reduced in chunk order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

WORKERS_ENV = "PRWTAIL_WORKERS"

# stream tags; changing any of these changes every published number
TAG_SUP = 1
TAG_SUP_PRIME = 2
TAG_PAIRS = 3
TAG_RENEWAL = 4
TAG_ARB = 5
TAG_MIN_MOMENT = 6
TAG_SINGLE = 7
TAG_PLUGIN = 8

T = TypeVar("T")


def stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Generator for chunk ``index`` of ensemble ``tag`` under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def chunk_sizes(n: int, chunk: int) -> list[int]:
    if n < 0:
        raise ValueError("n must be non-negative")
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[int, int], T], n: int, chunk: int, workers: int | None = None
) -> list[T]:
    """Run ``fn(index, size)`` over the chunks of ``n`` items, results in index order."""
    sizes = chunk_sizes(n, chunk)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(sizes) <= 1:
        return [fn(i, s) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


class RunningMoments:
    """Mean and centred second moment, merged chunk by chunk (Chan et al.)."""

    def __init__(self, k: int = 1):
        self.n = 0
        self.mean = np.zeros(k)
        self.m2 = np.zeros(k)

    def add_chunk(self, values: np.ndarray) -> None:
        """``values`` has shape (k, n_chunk): one row per functional."""
        values = np.atleast_2d(values)
        nb = values.shape[1]
        if nb == 0:
            return
        mb = values.mean(axis=1)
        m2b = ((values - mb[:, None]) ** 2).sum(axis=1)
        self.merge(nb, mb, m2b)

    def merge(self, nb: int, mb: np.ndarray, m2b: np.ndarray) -> None:
        if nb == 0:
            return
        na = self.n
        n = na + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (na * nb / n)
        self.n = n

    @property
    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)
