"""Cost model for choosing between data shipping (DS) and function shipping (FS).

    COST(DS) = C_Read + C_Sample + C_CExec
    COST(FS) = C_Sample + C_WExec + C_Write + C_CAgg

Each term is instantiated with the linear models used by the simulator:

    C_Read   link time for the bytes the coordinator pulls: 16 B per tuple of
             every column region read (all rows for none/bernoulli, the
             expected sampled clusters for cluster sampling), one latency
             per worker.
    C_Sample inclusion decisions x per_tuple_scan / cores of the node that
             samples (coordinator under DS, worker under FS). Bernoulli
             decides once per tuple, cluster sampling once per cluster.
    C_CExec  sampled tuples x per_tuple_agg / coordinator cores.
    C_WExec  sampled tuples per worker x per_tuple_agg / worker cores.
    C_Write  one result push per worker per query: latency + (32 + 16 E) / bw.
    C_CAgg   E entries per worker per query x per_entry_merge / coordinator cores.

A batch of Q queries reads data once under DS and repeats every other term
Q times. Totals are summed as written above, left to right, in exact
rational arithmetic.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .config import ClusterSetup, save_profile
from .errors import CalibrationError
from .execution import GroupCounts, Query, execute_local, merge, wire_decode, wire_encode, wire_size
from .relation import Order, Relation, TUPLE_BYTES
from .sampling import Method, SampleSpec, SampleView, bernoulli_sample, bernoulli_range_mask
from .transport import as_fraction


class Mode(str, enum.Enum):
    FS = "FS"
    DS = "DS"
    AUTO = "AUTO"


ZERO = Fraction(0)


@dataclass(frozen=True)
class CostBreakdown:
    c_read: Fraction = ZERO
    c_sample: Fraction = ZERO
    c_cexec: Fraction = ZERO
    c_wexec: Fraction = ZERO
    c_write: Fraction = ZERO
    c_cagg: Fraction = ZERO

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    def as_dict(self) -> dict[str, Fraction]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def ds_total(b: CostBreakdown) -> Fraction:
    return b.c_read + b.c_sample + b.c_cexec


def fs_total(b: CostBreakdown) -> Fraction:
    return b.c_sample + b.c_wexec + b.c_write + b.c_cagg


@dataclass(frozen=True)
class CostEstimate:
    ds_breakdown: CostBreakdown
    fs_breakdown: CostBreakdown

    @property
    def ds_total(self) -> Fraction:
        return ds_total(self.ds_breakdown)

    @property
    def fs_total(self) -> Fraction:
        return fs_total(self.fs_breakdown)

    @property
    def relative_gap(self) -> float:
        top = max(self.ds_total, self.fs_total)
        return float(abs(self.fs_total - self.ds_total) / top) if top else 0.0


@dataclass(frozen=True)
class WorkloadStats:
    row_count: int
    estimated_result_entries: int
    sampling: SampleSpec = SampleSpec()
    query_count: int = 1

    def __post_init__(self):
        if self.query_count < 1:
            raise ValueError("query_count must be >= 1")
        if self.estimated_result_entries < 0:
            raise ValueError("estimated_result_entries must be >= 0")
        if self.estimated_result_entries > max(self.row_count, 1):
            raise ValueError("estimated_result_entries cannot exceed row_count")


def estimate(setup: ClusterSetup, stats: WorkloadStats) -> CostEstimate:
    n = stats.row_count
    w = setup.workers
    q = stats.query_count
    p = as_fraction(stats.sampling.rate)
    method = stats.sampling.method
    link = setup.link
    scan, agg, mrg = setup.per_tuple_scan_s, setup.per_tuple_agg_s, setup.per_entry_merge_s
    cc, cw = setup.coordinator_cores, setup.worker_cores

    clusters = -(-n // setup.cluster_size)
    rows_w = -(-n // w)
    if method is Method.NONE:
        decisions, decisions_w = 0, 0
        included, included_w = Fraction(n), Fraction(rows_w)
        read_bytes = TUPLE_BYTES * n
    elif method is Method.BERNOULLI:
        decisions, decisions_w = n, rows_w
        included, included_w = p * n, p * rows_w
        read_bytes = TUPLE_BYTES * n
    else:
        decisions, decisions_w = clusters, -(-clusters // w)
        included, included_w = p * n, p * rows_w
        read_bytes = TUPLE_BYTES * p * n

    ds = CostBreakdown(
        c_read=w * link.latency_s + read_bytes / link.bandwidth_Bps,
        c_sample=q * decisions * scan / cc,
        c_cexec=q * included * agg / cc,
    )

    entries = stats.estimated_result_entries
    if w > 1:
        entries = min(entries, rows_w)
    fs = CostBreakdown(
        c_sample=q * decisions_w * scan / cw,
        c_wexec=q * included_w * agg / cw,
        c_write=q * w * link.transfer_time(wire_size(entries)),
        c_cagg=q * w * entries * mrg / cc,
    )
    return CostEstimate(ds, fs)


def choose_mode(est: CostEstimate) -> Mode:
    """DS only when it is strictly cheaper; FS otherwise (including ties)."""
    return Mode.DS if est.fs_total > est.ds_total else Mode.FS


def expected_result_entries(
    row_count: int,
    distinct_b: int,
    order: Union[Order, str],
    sampling: SampleSpec,
    cluster_size: int = 1024,
) -> int:
    """Expected number of groups a sample of a generated table contains.

    Uses the generator's structure (equal group sizes, round-robin then
    shuffled or sorted); it is workload knowledge, not a cardinality
    estimator for arbitrary data.
    """
    if row_count == 0:
        return 0
    d = distinct_b
    p = sampling.rate
    if sampling.method is Method.NONE or p >= 1.0:
        return d
    if p <= 0.0:
        return 0
    base, extra = divmod(row_count, d)
    sizes = np.full(d, base, dtype=np.int64)
    sizes[:extra] += 1
    miss = 1.0 - p
    if sampling.method is Method.BERNOULLI:
        present = 1.0 - miss ** sizes.astype(float)
    elif Order(order) is Order.SORTED_BY_B:
        ends = np.cumsum(sizes)
        starts = ends - sizes
        spans = (ends - 1) // cluster_size - starts // cluster_size + 1
        present = 1.0 - miss ** spans.astype(float)
    else:
        clusters = -(-row_count // cluster_size)
        hit = clusters * (1.0 - (1.0 - 1.0 / clusters) ** sizes.astype(float))
        present = 1.0 - miss ** hit
    return int(round(float(present.sum())))


# -- calibration ------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    per_tuple_scan_s: float
    per_tuple_agg_s: float
    per_entry_merge_s: float

    def apply(self, setup: ClusterSetup) -> ClusterSetup:
        return setup.replace(
            per_tuple_scan_s=self.per_tuple_scan_s,
            per_tuple_agg_s=self.per_tuple_agg_s,
            per_entry_merge_s=self.per_entry_merge_s,
        )


def best_time(fn, repeats: int) -> float:
    """Fastest of ``repeats`` timed calls after one warm-up; noise only adds time."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return min(samples)


def scan_once(rel: Relation, spec: SampleSpec) -> np.ndarray:
    """One uncached Bernoulli pass: every decision plus selection."""
    return np.flatnonzero(bernoulli_range_mask(spec.seed, rel.start, rel.stop, spec.rate))


def aggregate_once(view: SampleView, query: Query) -> GroupCounts:
    """Single-lane group count over an existing view."""
    return execute_local(view, query, 1)


def calibrate(
    rel: Relation,
    setup: ClusterSetup,
    profile_path: Optional[Union[str, Path]] = None,
    repeats: int = 5,
) -> Calibration:
    """Measure the per-core CPU coefficients by timing single-lane runs."""
    n = rel.row_count
    if n < 10**5:
        raise CalibrationError(f"calibration needs >= 1e5 rows, got {n}")
    spec = SampleSpec(Method.BERNOULLI, 0.5, seed=0xCA11B)
    query = Query(0, spec)
    view = bernoulli_sample(rel, spec, cache=False)

    scan_s = best_time(lambda: scan_once(rel, spec), repeats)
    agg_s = best_time(lambda: aggregate_once(view, query), repeats)

    entries = min(n, 10**5)
    keys = np.arange(entries, dtype=np.int64)
    left = wire_encode(GroupCounts(keys, np.ones(entries, np.int64)))
    right = GroupCounts(keys, np.ones(entries, np.int64))
    merge_s = best_time(lambda: merge([wire_decode(left), right]), repeats)

    for name, elapsed in (("scan", scan_s), ("aggregate", agg_s), ("merge", merge_s)):
        if not elapsed > 0 or math.isinf(elapsed):
            raise CalibrationError(f"degenerate {name} timing: {elapsed!r}")
    if view.included_count == 0:
        raise CalibrationError("calibration sample is empty")

    cal = Calibration(scan_s / n, agg_s / view.included_count, merge_s / entries)
    if profile_path is not None:
        save_profile(cal.apply(setup), profile_path)
    return cal
