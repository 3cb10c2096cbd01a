"""Reproducible random streams.

Every estimator takes a :class:`numpy.random.Generator` and splits its work
into fixed-size chunks, one child stream per chunk. Child streams come from
``Generator.spawn`` (counter-based Philox underneath), so the partition and
therefore the results depend only on the seed and the sample size, never on
the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_CHUNK = 16384

_threads = 1


def set_threads(k: int) -> None:
    """Cap the number of worker threads used by :func:`map_chunks`."""
    global _threads
    if k < 1:
        raise ValueError("threads must be >= 1")
    _threads = int(k)


def get_threads() -> int:
    return _threads


def make_rng(seed) -> np.random.Generator:
    """Philox-backed generator from an integer seed (or SeedSequence)."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def provenance(rng: np.random.Generator) -> dict:
    ss = rng.bit_generator.seed_seq
    return {
        "bit_generator": type(rng.bit_generator).__name__,
        "entropy": int(ss.entropy) if ss.entropy is not None else None,
        "spawn_key": list(ss.spawn_key),
    }


def integer_seed(rng: np.random.Generator) -> int:
    """A 32-bit seed drawn from ``rng``, for code that keeps its own state (numba)."""
    return int(rng.integers(0, 2**31 - 1))


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if total < 0:
        raise ValueError("total must be >= 0")
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[int, np.random.Generator], T],
    total: int,
    rng: np.random.Generator,
    chunk: int = DEFAULT_CHUNK,
    threads: int | None = None,
) -> list[T]:
    """Run ``fn(size, child_rng)`` over a deterministic partition of ``total``.

    Results come back in chunk order regardless of scheduling.
    """
    sizes = chunk_sizes(total, chunk)
    children = rng.spawn(len(sizes)) if sizes else []
    threads = _threads if threads is None else threads
    if threads <= 1 or len(sizes) <= 1:
        return [fn(s, g) for s, g in zip(sizes, children)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, sizes, children))


def tree_reduce(items: Sequence[T], combine: Callable[[T, T], T]) -> T:
    """Pairwise (balanced) reduction; the grouping depends only on ``len(items)``."""
    if not items:
        raise ValueError("nothing to reduce")
    level = list(items)
    while len(level) > 1:
        nxt = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass(frozen=True)
class Sums:
    """Running (count, sum, sum of squares) of per-draw values; merge by addition."""

    count: int
    total: float
    total_sq: float

    @classmethod
    def of(cls, values) -> "Sums":
        v = np.asarray(values, dtype=float).ravel()
        return cls(v.size, float(v.sum()), float(np.dot(v, v)))

    def __add__(self, other: "Sums") -> "Sums":
        return Sums(self.count + other.count, self.total + other.total,
                    self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count

    @property
    def variance(self) -> float:
        n = self.count
        if n < 2:
            return float("inf")
        m = self.total / n
        return max(self.total_sq / n - m * m, 0.0) * n / (n - 1)

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.count))


def merge_sums(parts: Sequence[Sums]) -> Sums:
    return tree_reduce(parts, lambda a, b: a + b)
