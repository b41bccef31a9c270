"""Bernoulli and cluster sampling with site-independent membership.

Whether a tuple (or cluster) is in the sample is a pure function of
``(seed, index, rate)``: the splitmix64 finalizer is applied to
``seed ^ index`` and compared against ``floor(rate * 2**64)``. A worker and a
coordinator evaluating the same spec therefore select the same tuples, in any
order and over any partitioning.

The finalizer constants below are frozen; golden tests depend on them.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidSpecError
from .relation import ClusterLayout, Relation, layout as default_layout

MASK64 = (1 << 64) - 1
MIX_SHIFT_1, MIX_MUL_1 = 30, 0xBF58476D1CE4E5B9
MIX_SHIFT_2, MIX_MUL_2 = 27, 0x94D049BB133111EB
MIX_SHIFT_3 = 31


class Method(str, enum.Enum):
    NONE = "none"
    BERNOULLI = "bernoulli"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class SampleSpec:
    method: Method = Method.NONE
    rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method is Method.NONE:
            object.__setattr__(self, "rate", 1.0)
        rate = float(self.rate)
        if not 0.0 <= rate <= 1.0 or math.isnan(rate):
            raise InvalidSpecError(f"sampling rate must lie in [0, 1], got {self.rate}")
        object.__setattr__(self, "rate", rate)
        if not 0 <= self.seed <= MASK64:
            raise InvalidSpecError("sample seed must fit in 64 unsigned bits")


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int."""
    x &= MASK64
    x = ((x ^ (x >> MIX_SHIFT_1)) * MIX_MUL_1) & MASK64
    x = ((x ^ (x >> MIX_SHIFT_2)) * MIX_MUL_2) & MASK64
    return x ^ (x >> MIX_SHIFT_3)


def mix64_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(MIX_SHIFT_1))) * np.uint64(MIX_MUL_1)
        x = (x ^ (x >> np.uint64(MIX_SHIFT_2))) * np.uint64(MIX_MUL_2)
    return x ^ (x >> np.uint64(MIX_SHIFT_3))


def threshold(rate: float) -> int:
    """floor(rate * 2**64); equals 2**64 at rate 1, which no hash reaches."""
    return math.floor(rate * 2.0**64)


def include_decision(seed: int, index: int, rate: float) -> bool:
    if not 0.0 <= rate <= 1.0:
        raise InvalidSpecError(f"rate must lie in [0, 1], got {rate}")
    return mix64(seed ^ index) < threshold(rate)


def include_mask(seed: int, indices: np.ndarray, rate: float) -> np.ndarray:
    """Vectorised include_decision over an array of indices."""
    thr = threshold(rate)
    indices = np.asarray(indices)
    if thr > MASK64:
        return np.ones(indices.shape, dtype=bool)
    if thr == 0:
        return np.zeros(indices.shape, dtype=bool)
    return mix64_array(indices.astype(np.uint64) ^ np.uint64(seed)) < np.uint64(thr)


def bernoulli_range_mask(seed: int, lo: int, hi: int, rate: float) -> np.ndarray:
    """Decision for every global index in [lo, hi). Uncached; calibration times this."""
    return include_mask(seed, np.arange(lo, hi, dtype=np.uint64), rate)


@functools.lru_cache(maxsize=8)
def _cached_range_mask(seed: int, lo: int, hi: int, rate: float) -> np.ndarray:
    mask = bernoulli_range_mask(seed, lo, hi, rate)
    mask.flags.writeable = False
    return mask


class SampleView:
    """The tuples of ``source`` selected by one sampling pass.

    Ranges are half-open global index ranges. ``decisions`` counts inclusion
    decisions evaluated (one per tuple for Bernoulli, one per cluster for
    cluster sampling); ``touched`` counts tuples the pass had to visit.
    """

    def __init__(
        self,
        source: Relation,
        starts: Optional[np.ndarray] = None,
        stops: Optional[np.ndarray] = None,
        *,
        positions: Optional[np.ndarray] = None,
        decisions: int = 0,
        touched: int = 0,
    ):
        if positions is None and (starts is None or stops is None):
            raise ValueError("need ranges or positions")
        self.source = source
        self._starts = None if starts is None else np.asarray(starts, dtype=np.int64)
        self._stops = None if stops is None else np.asarray(stops, dtype=np.int64)
        self._positions = positions
        self.decisions = decisions
        self.touched = touched

    @classmethod
    def full(cls, source: Relation) -> "SampleView":
        return cls(
            source,
            np.array([source.start] if source.row_count else [], dtype=np.int64),
            np.array([source.stop] if source.row_count else [], dtype=np.int64),
            touched=source.row_count,
        )

    def _ensure_ranges(self):
        if self._starts is None:
            pos = self._positions
            if len(pos) == 0:
                self._starts = self._stops = np.empty(0, dtype=np.int64)
            else:
                breaks = np.flatnonzero(np.diff(pos) != 1) + 1
                self._starts = pos[np.concatenate(([0], breaks))]
                self._stops = pos[np.concatenate((breaks - 1, [len(pos) - 1]))] + 1

    @property
    def starts(self) -> np.ndarray:
        self._ensure_ranges()
        return self._starts

    @property
    def stops(self) -> np.ndarray:
        self._ensure_ranges()
        return self._stops

    @property
    def included_ranges(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.stops.tolist()))

    @property
    def included_count(self) -> int:
        if self._positions is not None:
            return len(self._positions)
        return int((self._stops - self._starts).sum())

    def positions(self) -> np.ndarray:
        """Global indices of included tuples, ascending."""
        if self._positions is None:
            lengths = self._stops - self._starts
            total = int(lengths.sum())
            if len(lengths) == 1:
                self._positions = np.arange(self._starts[0], self._stops[0], dtype=np.int64)
            else:
                shift = np.repeat(self._starts - np.cumsum(lengths) + lengths, lengths)
                self._positions = shift + np.arange(total, dtype=np.int64)
        return self._positions

    def keys(self) -> np.ndarray:
        """R.b values of the included tuples."""
        col_b = self.source.col_b
        if self._positions is None and len(self._starts) == 1:
            lo = int(self._starts[0]) - self.source.start
            hi = int(self._stops[0]) - self.source.start
            return col_b[lo:hi]
        return col_b[self.positions() - self.source.start]

    def index_set(self) -> set[int]:
        return set(self.positions().tolist())


def _check_method(spec: SampleSpec, expected: Method):
    if spec.method is not expected:
        raise ValueError(f"expected a {expected.value} spec, got {spec.method.value}")


def bernoulli_sample(rel: Relation, spec: SampleSpec, *, cache: bool = True) -> SampleView:
    """Each tuple independently kept with probability ``spec.rate``; visits every index."""
    _check_method(spec, Method.BERNOULLI)
    lo, hi = rel.start, rel.stop
    if cache:
        mask = _cached_range_mask(spec.seed, lo, hi, spec.rate)
    else:
        mask = bernoulli_range_mask(spec.seed, lo, hi, spec.rate)
    positions = np.flatnonzero(mask).astype(np.int64) + lo
    return SampleView(rel, positions=positions, decisions=hi - lo, touched=hi - lo)


def included_clusters(layout: ClusterLayout, spec: SampleSpec, lo: int, hi: int) -> np.ndarray:
    """Ids of sampled clusters among those overlapping [lo, hi)."""
    overlapping = layout.clusters_overlapping(lo, hi)
    ids = np.arange(overlapping.start, overlapping.stop, dtype=np.int64)
    return ids[include_mask(spec.seed, ids, spec.rate)]


def cluster_sample(rel: Relation, layout: ClusterLayout, spec: SampleSpec) -> SampleView:
    """Whole clusters kept with probability ``spec.rate``; visits only kept clusters.

    On a partition the kept clusters are clipped to the partition's rows, so
    the union over all partitions is still a union of full clusters.
    """
    _check_method(spec, Method.CLUSTER)
    lo, hi = rel.start, rel.stop
    overlapping = layout.clusters_overlapping(lo, hi)
    ids = included_clusters(layout, spec, lo, hi)
    starts = np.maximum(ids * layout.cluster_size, lo)
    stops = np.minimum((ids + 1) * layout.cluster_size, min(hi, layout.row_count))
    view = SampleView(rel, starts, stops, decisions=len(overlapping))
    view.touched = view.included_count
    return view


def sample(rel: Relation, spec: SampleSpec, cluster_layout: Optional[ClusterLayout] = None) -> SampleView:
    if spec.method is Method.NONE:
        return SampleView.full(rel)
    if spec.method is Method.BERNOULLI:
        return bernoulli_sample(rel, spec)
    return cluster_sample(rel, cluster_layout or default_layout(rel), spec)


def groups_present(view: SampleView) -> set[int]:
    return set(np.unique(view.keys()).tolist())
