"""Columnar storage for the table R(a, b) and its fixed-size cluster layout."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidSpecError

TUPLE_BYTES = 16
DEFAULT_CLUSTER_SIZE = 1024


class Order(str, enum.Enum):
    SHUFFLED = "shuffled"
    SORTED_BY_B = "sorted_by_b"


@dataclass(frozen=True)
class GenSpec:
    row_count: int
    distinct_b: int
    order: Order = Order.SHUFFLED
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "order", Order(self.order))
        if self.row_count < 0:
            raise InvalidSpecError(f"row_count must be >= 0, got {self.row_count}")
        if self.distinct_b < 1:
            raise InvalidSpecError(f"distinct_b must be >= 1, got {self.distinct_b}")
        if self.row_count > 0 and self.distinct_b > self.row_count:
            raise InvalidSpecError(
                f"distinct_b ({self.distinct_b}) exceeds row_count ({self.row_count})"
            )
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True, eq=False)
class Relation:
    """Two int64 columns held in one contiguous ``(2, n)`` block.

    ``data[0]`` is R.a and ``data[1]`` is R.b. ``start`` is the global index
    of the first row, so a worker's partition (or a coordinator's mirror of
    it) keeps the same tuple identities as the full table. For a full
    relation ``start == 0`` and R.a runs 1..row_count.
    """

    data: np.ndarray
    start: int = 0
    spec: Optional[GenSpec] = field(default=None, compare=False)

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise ValueError("relation data must have shape (2, n)")
        if self.data.dtype != np.int64:
            raise ValueError("relation columns must be int64")

    @classmethod
    def from_columns(cls, col_a, col_b, start: int = 0) -> "Relation":
        col_a = np.asarray(col_a, dtype=np.int64)
        col_b = np.asarray(col_b, dtype=np.int64)
        if col_a.shape != col_b.shape or col_a.ndim != 1:
            raise ValueError("columns must be 1-d and of equal length")
        return cls(np.ascontiguousarray(np.stack([col_a, col_b])), start)

    @classmethod
    def from_b(cls, col_b, start: int = 0) -> "Relation":
        col_b = np.asarray(col_b, dtype=np.int64)
        col_a = np.arange(start + 1, start + 1 + len(col_b), dtype=np.int64)
        return cls.from_columns(col_a, col_b, start)

    @property
    def col_a(self) -> np.ndarray:
        return self.data[0]

    @property
    def col_b(self) -> np.ndarray:
        return self.data[1]

    @property
    def row_count(self) -> int:
        return self.data.shape[1]

    @property
    def stop(self) -> int:
        return self.start + self.row_count

    def partition(self, lo: int, hi: int) -> "Relation":
        """Contiguous copy of global rows [lo, hi), as a worker would hold it."""
        if not self.start <= lo <= hi <= self.stop:
            raise IndexError(f"partition [{lo}, {hi}) outside [{self.start}, {self.stop})")
        block = np.ascontiguousarray(self.data[:, lo - self.start : hi - self.start])
        return Relation(block, lo, self.spec)

    def split(self, parts: int) -> list["Relation"]:
        """Split into ``parts`` contiguous partitions of (nearly) equal size."""
        bounds = partition_bounds(self.row_count, parts)
        if parts == 1:
            return [self]
        return [self.partition(self.start + lo, self.start + hi) for lo, hi in bounds]


def partition_bounds(row_count: int, parts: int) -> list[tuple[int, int]]:
    if parts < 1:
        raise ValueError("parts must be >= 1")
    edges = [row_count * k // parts for k in range(parts + 1)]
    return list(zip(edges[:-1], edges[1:]))


def generate(spec: GenSpec) -> Relation:
    """Build R deterministically from ``spec``.

    b-values are assigned round-robin (``b[i] = i % distinct_b + 1``) so every
    group has the same size up to one tuple, then either sorted or permuted by
    a seeded Fisher-Yates shuffle. R.a is always 1..row_count in order.
    """
    n = spec.row_count
    col_b = np.arange(n, dtype=np.int64) % spec.distinct_b + 1
    if spec.order is Order.SORTED_BY_B:
        col_b.sort(kind="stable")
    else:
        # Generator.shuffle is an in-place Fisher-Yates over the array
        np.random.default_rng(spec.seed).shuffle(col_b)
    data = np.empty((2, n), dtype=np.int64)
    data[0] = np.arange(1, n + 1, dtype=np.int64)
    data[1] = col_b
    return Relation(data, 0, spec)


def size_bytes(rel: Relation) -> int:
    return TUPLE_BYTES * rel.row_count


@dataclass(frozen=True)
class ClusterLayout:
    row_count: int
    cluster_size: int

    def __post_init__(self):
        if self.cluster_size < 1:
            raise ValueError(f"cluster_size must be >= 1, got {self.cluster_size}")

    @property
    def cluster_count(self) -> int:
        return -(-self.row_count // self.cluster_size)

    def cluster_range(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.cluster_count:
            raise IndexError(k)
        lo = k * self.cluster_size
        return lo, min(lo + self.cluster_size, self.row_count)

    def cluster_of(self, index: int) -> int:
        return index // self.cluster_size

    def clusters_overlapping(self, lo: int, hi: int) -> range:
        """Ids of clusters that intersect global index range [lo, hi)."""
        if hi <= lo:
            return range(0)
        return range(lo // self.cluster_size, (hi - 1) // self.cluster_size + 1)


def layout(rel: Relation, cluster_size: int = DEFAULT_CLUSTER_SIZE) -> ClusterLayout:
    """Cluster layout over the global index space of ``rel``'s full table."""
    total = rel.spec.row_count if rel.spec is not None else rel.stop
    return ClusterLayout(total, cluster_size)
