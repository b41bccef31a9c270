"""SELECT b, COUNT(*) FROM R GROUP BY b over a sample view.

Aggregation is hash/bincount based per lane, over contiguous chunks of the
view. Lane partials are merged by key, so the output does not depend on the
core budget or on how the view is chunked.
"""

from __future__ import annotations

import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import DecodeError
from .relation import Relation
from .sampling import SampleSpec, SampleView

WIRE_MAGIC = 0x53484950
WIRE_VERSION = 1
_HEADER = struct.Struct("<IB3xQdB7x")
WIRE_HEADER_BYTES = _HEADER.size
WIRE_ENTRY_BYTES = 16
_ENTRY_DTYPE = np.dtype("<i8")

# direct-address counting is used below this key span
_BINCOUNT_SPAN = 1 << 22

assert WIRE_HEADER_BYTES == 32


@dataclass(frozen=True)
class Query:
    id: int = 0
    sample: SampleSpec = field(default_factory=SampleSpec)
    scale_estimates: bool = False


class GroupCounts:
    """Per-group counts held as parallel sorted int64 arrays."""

    __slots__ = ("keys", "counts", "sampled_rate", "scaled")

    def __init__(self, keys=(), counts=(), sampled_rate: float = 1.0, scaled: bool = False):
        self.keys = np.asarray(keys, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.sampled_rate = float(sampled_rate)
        self.scaled = bool(scaled)
        if self.keys.shape != self.counts.shape:
            raise ValueError("keys and counts differ in length")

    @classmethod
    def from_mapping(cls, entries: Mapping[int, int], sampled_rate: float = 1.0, scaled: bool = False):
        items = sorted(entries.items())
        keys = [k for k, _ in items]
        counts = [c for _, c in items]
        return cls(keys, counts, sampled_rate, scaled)

    @property
    def entries(self) -> dict[int, int]:
        return dict(zip(self.keys.tolist(), self.counts.tolist()))

    @property
    def entry_count(self) -> int:
        return len(self.keys)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return len(self.keys)

    def __eq__(self, other):
        if not isinstance(other, GroupCounts):
            return NotImplemented
        return (
            self.scaled == other.scaled
            and self.sampled_rate == other.sampled_rate
            and np.array_equal(self.keys, other.keys)
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self):
        head = dict(list(self.entries.items())[:4])
        more = "..." if self.entry_count > 4 else ""
        return f"GroupCounts({head}{more}, rate={self.sampled_rate}, scaled={self.scaled})"


def _count_keys(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(keys) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    lo, hi = int(keys.min()), int(keys.max())
    if hi - lo < max(_BINCOUNT_SPAN, 4 * len(keys)):
        counts = np.bincount(keys - lo if lo else keys, minlength=0)
        present = np.flatnonzero(counts)
        return present.astype(np.int64) + lo, counts[present].astype(np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64)


def _sum_by_key(keys: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(keys) == 0:
        return keys, counts
    order = np.argsort(keys, kind="stable")
    keys, counts = keys[order], counts[order]
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    return keys[starts], np.add.reduceat(counts, starts)


def execute_local(view: SampleView, query: Query, core_budget: int = 1) -> GroupCounts:
    """Exact group counts over ``view`` using ``core_budget`` lanes."""
    if core_budget < 1:
        raise ValueError("core_budget must be >= 1")
    keys = view.keys()
    chunks = np.array_split(keys, min(core_budget, max(len(keys), 1)))
    if len(chunks) == 1:
        lanes = [_count_keys(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            lanes = list(pool.map(_count_keys, chunks))
    rate = query.sample.rate
    result = merge([GroupCounts(k, c, rate) for k, c in lanes])
    if query.scale_estimates:
        result = scale(result, rate)
    return result


def merge(partials: Iterable[GroupCounts]) -> GroupCounts:
    """Pointwise sum of partial results sharing one sampling rate."""
    partials = list(partials)
    if not partials:
        return GroupCounts()
    scaled = {p.scaled for p in partials}
    if len(scaled) > 1:
        raise ValueError("cannot merge scaled with unscaled partials")
    rates = {p.sampled_rate for p in partials}
    if len(rates) > 1:
        raise ValueError(f"partials carry different sampling rates: {sorted(rates)}")
    if len(partials) == 1:
        p = partials[0]
        return GroupCounts(p.keys, p.counts, p.sampled_rate, p.scaled)
    keys, counts = _sum_by_key(
        np.concatenate([p.keys for p in partials]),
        np.concatenate([p.counts for p in partials]),
    )
    return GroupCounts(keys, counts, rates.pop(), scaled.pop())


def scale(result: GroupCounts, rate: float) -> GroupCounts:
    """Scale sampled counts up by 1/rate, rounding halves upward."""
    if result.scaled:
        raise ValueError("result is already scaled")
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"scale rate must lie in (0, 1], got {rate}")
    if rate == 1.0:
        counts = result.counts.copy()
    else:
        counts = np.floor(result.counts / rate + 0.5).astype(np.int64)
    return GroupCounts(result.keys, counts, result.sampled_rate, True)


def oracle_group_counts(rel: Relation, view: Optional[SampleView] = None) -> GroupCounts:
    """Single-threaded brute-force scan; ground truth for equivalence tests."""
    if view is None:
        values = rel.col_b.tolist()
    else:
        base = rel.start
        values = []
        for lo, hi in view.included_ranges:
            values.extend(rel.col_b[lo - base : hi - base].tolist())
    return GroupCounts.from_mapping(Counter(values))


def wire_size(entry_count: int) -> int:
    return WIRE_HEADER_BYTES + WIRE_ENTRY_BYTES * entry_count


def wire_encode(result: GroupCounts) -> bytes:
    """Header then (key, count) little-endian i64 pairs in ascending key order."""
    header = _HEADER.pack(WIRE_MAGIC, WIRE_VERSION, result.entry_count,
                          result.sampled_rate, int(result.scaled))
    body = np.empty((result.entry_count, 2), dtype=_ENTRY_DTYPE)
    body[:, 0] = result.keys
    body[:, 1] = result.counts
    return header + body.tobytes()


def wire_decode(buf) -> GroupCounts:
    buf = memoryview(buf).cast("B")
    if len(buf) < WIRE_HEADER_BYTES:
        raise DecodeError(f"result buffer truncated: {len(buf)} bytes")
    magic, version, count, rate, scaled = _HEADER.unpack_from(buf)
    if magic != WIRE_MAGIC:
        raise DecodeError(f"bad result magic 0x{magic:08x}")
    if version != WIRE_VERSION:
        raise DecodeError(f"unsupported result version {version}")
    if scaled not in (0, 1):
        raise DecodeError("corrupt scaled flag")
    if len(buf) != wire_size(count):
        raise DecodeError(f"expected {wire_size(count)} bytes for {count} entries, got {len(buf)}")
    body = np.frombuffer(buf, dtype=_ENTRY_DTYPE, offset=WIRE_HEADER_BYTES).reshape(count, 2)
    keys = body[:, 0].astype(np.int64)
    counts = body[:, 1].astype(np.int64)
    if count > 1 and not np.all(keys[1:] > keys[:-1]):
        raise DecodeError("result keys are not strictly ascending")
    if np.any(counts < 0):
        raise DecodeError("negative count in result")
    return GroupCounts(keys, counts, rate, bool(scaled))
