"""Coordinator and workers: run a query batch by function or data shipping.

Queries really execute (on the worker's partition for FS, on the
coordinator's fetched copy for DS); the time they take is charged in virtual
time from the cost coefficients in :class:`ClusterSetup`.

Node ids: the coordinator is 0, workers are 1..w.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .config import ClusterSetup
from .execution import GroupCounts, Query, execute_local, merge, scale, wire_decode, wire_encode
from .planner import CostBreakdown, Mode, WorkloadStats, choose_mode, estimate, expected_result_entries
from .relation import ClusterLayout, Relation, partition_bounds
from .sampling import Method, SampleSpec, included_clusters, sample
from .sim import Resource, Simulator
from .transport import CpuCounter, MemoryRegion, gather_read, result_push

COORDINATOR = 0
ZERO = Fraction(0)


@dataclass
class Telemetry:
    mode: Mode
    response_time_s: Fraction = ZERO
    bytes_transferred: int = 0
    worker_cpu_s: Fraction = ZERO
    coordinator_cpu_s: Fraction = ZERO
    breakdown: CostBreakdown = field(default_factory=CostBreakdown)
    result_entries: int = 0
    timed_out: bool = False
    wall_time_s: float = 0.0


class Worker:
    """Holds one partition of R in a registered memory region."""

    def __init__(self, node_id: int, partition: Relation, layout: ClusterLayout):
        self.node_id = node_id
        self.partition = partition
        self.layout = layout
        self.cpu = CpuCounter()
        self.region = MemoryRegion(node_id, memoryview(partition.data), base=partition.start,
                                   cpu=self.cpu)

    def execute(self, query: Query, core_budget: int, layout: Optional[ClusterLayout] = None) -> bytes:
        view = sample(self.partition, query.sample, layout or self.layout)
        return wire_encode(execute_local(view, query, core_budget))


class LocalEndpoint:
    """In-process access to a worker, used by the virtual-time backend."""

    def __init__(self, worker: Worker):
        self.worker = worker

    def run_query(self, query: Query, core_budget: int) -> bytes:
        return self.worker.execute(query, core_budget)

    def read(self, ranges, link):
        return gather_read(self.worker.region, ranges, link)

    def close(self):
        pass


def sampling_decisions(spec: SampleSpec, lo: int, hi: int, layout: ClusterLayout) -> int:
    """Inclusion decisions a sampling pass over global rows [lo, hi) evaluates."""
    if spec.method is Method.BERNOULLI:
        return hi - lo
    if spec.method is Method.CLUSTER:
        return len(layout.clusters_overlapping(lo, hi))
    return 0


def _coalesce(starts: np.ndarray, stops: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    for s, e in zip(starts.tolist(), stops.tolist()):
        if runs and runs[-1][1] == s:
            runs[-1] = (runs[-1][0], e)
        else:
            runs.append((s, e))
    return runs


def _unscaled(query: Query) -> Query:
    return Query(query.id, query.sample, False) if query.scale_estimates else query


def _finish(result: GroupCounts, query: Query) -> GroupCounts:
    if query.scale_estimates and query.sample.rate > 0:
        return scale(result, query.sample.rate)
    return result


class Cluster:
    """One coordinator plus ``setup.workers`` workers over partitions of ``rel``."""

    def __init__(self, setup: ClusterSetup, rel: Relation, payload_log: Optional[list] = None):
        self.setup = setup
        self.rel = rel
        total = rel.spec.row_count if rel.spec is not None else rel.row_count
        self.layout = ClusterLayout(total, setup.cluster_size)
        self.bounds = [(rel.start + lo, rel.start + hi)
                       for lo, hi in partition_bounds(rel.row_count, setup.workers)]
        parts = rel.split(setup.workers)
        self.workers = [Worker(j + 1, part, self.layout) for j, part in enumerate(parts)]
        self.payload_log = payload_log
        if setup.backend == "socket":
            from .socket_backend import SocketEndpoint, WorkerServer

            self.endpoints = []
            for w in self.workers:
                server = WorkerServer(w)
                self.endpoints.append(SocketEndpoint(server.address, setup.cluster_size, server))
        else:
            self.endpoints = [LocalEndpoint(w) for w in self.workers]

    def close(self):
        for ep in self.endpoints:
            ep.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _log(self, payload):
        if self.payload_log is not None:
            self.payload_log.append(bytes(payload))

    # -- function shipping --------------------------------------------------

    def function_shipping(self, batch: Sequence[Query]):
        if not batch:
            raise ValueError("batch must be nonempty")
        setup = self.setup
        cw, cc = setup.worker_cores, setup.coordinator_cores
        sim = Simulator()
        cpus = [Resource(sim, f"worker{w.node_id}.cpu") for w in self.workers]
        link = Resource(sim, "link")
        coord = Resource(sim, "coordinator.cpu")
        tel = Telemetry(Mode.FS)
        phases = {"c_sample": ZERO, "c_wexec": ZERO, "c_write": ZERO, "c_cagg": ZERO}
        results: list[Optional[GroupCounts]] = [None] * len(batch)
        state = {}
        wall0 = time.perf_counter()

        def dispatch(qi):
            state.update(partials=[], sample_max=ZERO, exec_max=ZERO)
            for j in range(len(self.workers)):
                sim.schedule(sim.now, j + 1, compute, qi, j)

        def compute(qi, j):
            query = batch[qi]
            wire = self.endpoints[j].run_query(_unscaled(query), cw)
            self._log(wire)
            partial = wire_decode(wire)
            lo, hi = self.bounds[j]
            t_sample = sampling_decisions(query.sample, lo, hi, self.layout) * setup.per_tuple_scan_s / cw
            t_exec = partial.total * setup.per_tuple_agg_s / cw
            _, end = cpus[j].occupy(t_sample + t_exec)
            self.workers[j].cpu.charge(t_sample + t_exec)
            state["sample_max"] = max(state["sample_max"], t_sample)
            state["exec_max"] = max(state["exec_max"], t_exec)
            sim.schedule(end, j + 1, push, qi, wire, partial)

        def push(qi, wire, partial):
            stats = result_push(wire, setup.link)
            _, end = link.occupy(stats.sim_time_s)
            tel.bytes_transferred += stats.bytes
            phases["c_write"] += stats.sim_time_s
            sim.schedule(end, COORDINATOR, aggregate, qi, partial)

        def aggregate(qi, partial):
            t_merge = partial.entry_count * setup.per_entry_merge_s / cc
            _, end = coord.occupy(t_merge)
            phases["c_cagg"] += t_merge
            sim.schedule(end, COORDINATOR, collected, qi, partial)

        def collected(qi, partial):
            state["partials"].append(partial)
            if len(state["partials"]) < len(self.workers):
                return
            phases["c_sample"] += state["sample_max"]
            phases["c_wexec"] += state["exec_max"]
            results[qi] = _finish(merge(state["partials"]), batch[qi])
            if qi + 1 < len(batch):
                dispatch(qi + 1)

        sim.schedule(ZERO, COORDINATOR, dispatch, 0)
        tel.response_time_s = sim.run()
        tel.worker_cpu_s = sum((c.busy for c in cpus), ZERO)
        tel.coordinator_cpu_s = coord.busy
        tel.breakdown = CostBreakdown(**phases)
        return self._seal(results, tel, wall0)

    # -- data shipping ------------------------------------------------------

    def _read_plan(self, j: int, batch: Sequence[Query]) -> list[tuple[int, int]]:
        """Byte ranges of worker j's region the coordinator must pull."""
        lo, hi = self.bounds[j]
        m = hi - lo
        method = batch[0].sample.method
        if method is not Method.CLUSTER:
            return [(0, 16 * m)] if m else []
        ids = np.unique(np.concatenate(
            [included_clusters(self.layout, q.sample, lo, hi) for q in batch]))
        size = self.layout.cluster_size
        starts = np.maximum(ids * size, lo)
        stops = np.minimum((ids + 1) * size, hi)
        plan = []
        for s, e in _coalesce(starts, stops):
            plan.append((8 * (s - lo), 8 * (e - s)))
            plan.append((8 * m + 8 * (s - lo), 8 * (e - s)))
        return plan

    def _mirror(self, j: int, plan, chunks) -> Relation:
        """Coordinator-local copy of worker j's region, filled where it was read."""
        lo, hi = self.bounds[j]
        m = hi - lo
        if len(plan) == 1 and plan[0] == (0, 16 * m):
            data = np.frombuffer(chunks[0], dtype=np.int64).reshape(2, m)
        else:
            flat = np.empty(2 * m, dtype=np.int64)
            for (offset, length), chunk in zip(plan, chunks):
                flat[offset // 8 : (offset + length) // 8] = np.frombuffer(chunk, dtype=np.int64)
            data = flat.reshape(2, m)
        return Relation(data, lo, self.rel.spec)

    def data_shipping(self, batch: Sequence[Query]):
        if not batch:
            raise ValueError("batch must be nonempty")
        if len({q.sample.method for q in batch}) > 1:
            raise ValueError("data shipping needs one sampling method per batch; split the batch")
        setup = self.setup
        cc = setup.coordinator_cores
        sim = Simulator()
        link = Resource(sim, "link")
        coord = Resource(sim, "coordinator.cpu")
        tel = Telemetry(Mode.DS)
        phases = {"c_read": ZERO, "c_sample": ZERO, "c_cexec": ZERO}
        mirrors: list[Optional[Relation]] = [None] * len(self.workers)
        results: list[Optional[GroupCounts]] = [None] * len(batch)
        busy_before = [w.cpu.busy_s for w in self.workers]
        wall0 = time.perf_counter()

        def fetch(j):
            plan = self._read_plan(j, batch)
            chunks, stats = self.endpoints[j].read(plan, setup.link)
            for c in chunks:
                self._log(c)
            _, end = link.occupy(stats.sim_time_s)
            tel.bytes_transferred += stats.bytes
            phases["c_read"] += stats.sim_time_s
            sim.schedule(end, COORDINATOR, fetched, j, plan, chunks)

        def fetched(j, plan, chunks):
            mirrors[j] = self._mirror(j, plan, chunks)
            if any(m is None for m in mirrors):
                return
            for qi, query in enumerate(batch):
                partials, t_sample, t_exec = [], ZERO, ZERO
                for mirror in mirrors:
                    view = sample(mirror, query.sample, self.layout)
                    partials.append(execute_local(view, _unscaled(query), cc))
                    t_sample += view.decisions * setup.per_tuple_scan_s / cc
                    t_exec += view.included_count * setup.per_tuple_agg_s / cc
                coord.occupy(t_sample + t_exec)
                phases["c_sample"] += t_sample
                phases["c_cexec"] += t_exec
                results[qi] = _finish(merge(partials), query)
            sim.schedule(coord.free_at, COORDINATOR, lambda: None)

        for j in range(len(self.workers)):
            sim.schedule(ZERO, j + 1, fetch, j)
        tel.response_time_s = sim.run()
        assert [w.cpu.busy_s for w in self.workers] == busy_before, "worker CPU charged under DS"
        tel.worker_cpu_s = ZERO
        tel.coordinator_cpu_s = coord.busy
        tel.breakdown = CostBreakdown(**phases)
        return self._seal(results, tel, wall0)

    def _seal(self, results, tel: Telemetry, wall0: float):
        tel.result_entries = results[0].entry_count
        tel.timed_out = tel.response_time_s > self.setup.timeout_s
        tel.wall_time_s = time.perf_counter() - wall0
        return results, tel

    # -- mode selection -----------------------------------------------------

    def workload(self, batch: Sequence[Query], estimated_entries: Optional[int] = None) -> WorkloadStats:
        if estimated_entries is None:
            spec = self.rel.spec
            if spec is not None:
                estimated_entries = expected_result_entries(
                    spec.row_count, spec.distinct_b, spec.order, batch[0].sample, self.setup.cluster_size)
            else:
                estimated_entries = self.rel.row_count
        return WorkloadStats(self.rel.row_count, estimated_entries, batch[0].sample, len(batch))

    def dispatch(self, batch: Sequence[Query], mode=Mode.AUTO, estimated_entries: Optional[int] = None):
        mode = Mode(mode)
        if mode is Mode.AUTO:
            mode = choose_mode(estimate(self.setup, self.workload(batch, estimated_entries)))
        run = self.function_shipping if mode is Mode.FS else self.data_shipping
        results, tel = run(batch)
        return results, tel, mode


def run_function_shipping(setup: ClusterSetup, rel: Relation, batch: Sequence[Query]):
    with Cluster(setup, rel) as cluster:
        return cluster.function_shipping(batch)


def run_data_shipping(setup: ClusterSetup, rel: Relation, batch: Sequence[Query]):
    with Cluster(setup, rel) as cluster:
        return cluster.data_shipping(batch)


def dispatch(setup: ClusterSetup, rel: Relation, batch: Sequence[Query], mode=Mode.AUTO,
             estimated_entries: Optional[int] = None):
    with Cluster(setup, rel) as cluster:
        return cluster.dispatch(batch, mode, estimated_entries)
