"""Acceptance criteria 1-8, each at its stated tolerance.

Every check prints one ``PASS``/``FAIL`` line. Run standalone with
``python3 tests/test_acceptance.py`` or through pytest, where the lines are
repeated in the terminal summary.
"""

import functools
import math
import random
import socket
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from shipwright import bench
from shipwright.bench import Experiment, default_spec
from shipwright.clusternode import Cluster
from shipwright.config import ClusterSetup, baseline_profile
from shipwright.execution import Query, oracle_group_counts
from shipwright.planner import CostBreakdown, CostEstimate, Mode, choose_mode
from shipwright.relation import ClusterLayout, GenSpec, Order, Relation, generate, layout
from shipwright.sampling import (
    Method,
    SampleSpec,
    bernoulli_sample,
    cluster_sample,
    groups_present,
    sample,
)
from shipwright.transport import (
    CpuCounter,
    DsReadReq,
    DsReadResp,
    FsResult,
    LinkModel,
    MemoryRegion,
    QueryDispatch,
    one_sided_read,
    recv_message,
    send_message,
)

VERDICTS = {}


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
    VERDICTS[number] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def sweep(name):
    spec = default_spec(name, repetitions=1)
    results = bench.run_points(spec)
    return spec, results, bench.rows_from_points(spec, results)


def curve(rows, mode, sampling, field="response_time_s"):
    return [getattr(r, field) for r in rows if r.mode == mode and r.sampling == sampling]


# -- 1 ----------------------------------------------------------------------

def check_oracle_equivalence(configs=60, seed=2024):
    rng = random.Random(seed)
    t0 = time.perf_counter()
    mismatches = []
    for i in range(configs):
        n = int(10 ** rng.uniform(2, 6))
        d = rng.randint(1, min(n, 10**4))
        order = Order.SORTED_BY_B if i % 2 else Order.SHUFFLED
        method = [Method.NONE, Method.BERNOULLI, Method.CLUSTER][i % 3]
        rate = rng.choice([0.0, 0.01, 0.1, 0.5, 1.0, rng.random()])
        q = rng.randint(1, 5)
        setup = ClusterSetup(workers=rng.randint(1, 4), worker_cores=rng.randint(1, 28),
                             cluster_size=rng.choice([1, 7, 100, 1024]))
        rel = generate(GenSpec(n, d, order, rng.getrandbits(64)))
        batch = [Query(k, SampleSpec(method, rate, rng.getrandbits(64))) for k in range(q)]
        with Cluster(setup, rel) as cluster:
            fs, _, _ = cluster.dispatch(batch, Mode.FS)
            ds, _, _ = cluster.dispatch(batch, Mode.DS)
        lay = layout(rel, setup.cluster_size)
        for query, a, b in zip(batch, fs, ds):
            truth = oracle_group_counts(rel, sample(rel, query.sample, lay)).entries
            if not (a == b and a.entries == truth):
                mismatches.append(i)
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 60
    return report(1, "oracle equivalence", ok,
                  f"{configs} configs, {len(mismatches)} mismatches, {elapsed:.1f}s (< 60s)")


# -- 2 ----------------------------------------------------------------------

def check_sampling_statistics():
    worst = 0.0
    for n in (10**5, 10**6):
        rel = Relation.from_b(np.zeros(n, dtype=np.int64))
        for p in (0.01, 0.1, 0.5):
            k = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, p, 31337), cache=False).included_count
            worst = max(worst, abs(k - n * p) / math.sqrt(n * p * (1 - p)))
    rel = Relation.from_b(np.zeros(10_000, dtype=np.int64))
    lay = layout(rel, 97)
    closure_fail = 0
    for s in range(1000):
        spec = SampleSpec(Method.CLUSTER, 0.2, s)
        idx = set()
        for part in rel.split(3):
            idx |= cluster_sample(part, lay, spec).index_set()
        for k in {lay.cluster_of(i) for i in idx}:
            lo, hi = lay.cluster_range(k)
            if not set(range(lo, hi)) <= idx:
                closure_fail += 1
    big = generate(GenSpec(10**6, 50, Order.SHUFFLED, 3))
    spec = SampleSpec(Method.BERNOULLI, 0.1, 77)
    here = bernoulli_sample(big, spec, cache=False).positions()
    there = np.concatenate([bernoulli_sample(p, spec, cache=False).positions() for p in big.split(5)])
    site_ok = np.array_equal(here, there)
    ok = worst <= 6 and closure_fail == 0 and site_ok
    return report(2, "sampling statistics", ok,
                  f"max |dev| {worst:.2f} sigma (<= 6), closure failures {closure_fail}/1000 seeds, "
                  f"site-independent {site_ok}")


# -- 3 ----------------------------------------------------------------------

def check_group_miss():
    rel = generate(GenSpec(10**6, 10**4, Order.SORTED_BY_B, 0))
    clus = cluster_sample(rel, layout(rel, 100), SampleSpec(Method.CLUSTER, 0.1, 11))
    bern = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 0.1, 11))
    fc = len(groups_present(clus)) / 10**4
    fb = len(groups_present(bern)) / 10**4
    ok = 0.07 <= fc <= 0.13 and fb > 0.999
    return report(3, "group-miss pathology", ok,
                  f"cluster keeps {fc:.2%} of groups (10% +- 3%), bernoulli keeps {fb:.2%} (> 99.9%)")


# -- 4 ----------------------------------------------------------------------

def check_core_effects():
    spec, results, rows = sweep(Experiment.VARY_CORES)
    ds_passive = all(r.worker_cpu_s == 0 for r in rows if r.mode == "DS")
    ds_const = all(len(set(curve(rows, "DS", m))) == 1 for m in ("bernoulli", "cluster"))
    fs_mono = all(all(a >= b for a, b in zip(c, c[1:]))
                  for c in (curve(rows, "FS", "bernoulli"), curve(rows, "FS", "cluster")))
    xb = bench.crossovers(rows, "bernoulli")
    xc = bench.crossovers(rows, "cluster")
    cross_ok = len(xb) == 1 and len(xc) == 1 and xb[0] > xc[0]
    ratio = curve(rows, "FS", "bernoulli")[0] / curve(rows, "DS", "bernoulli")[0]
    ok = ds_passive and ds_const and fs_mono and cross_ok and ratio >= 5
    return report(4, "passivity and core effects", ok,
                  f"DS worker cpu 0: {ds_passive}, DS constant: {ds_const}, FS non-increasing: {fs_mono}, "
                  f"crossover bernoulli {xb} > cluster {xc}, 1-core FS/DS {ratio:.2f} (>= 5)")


# -- 5 ----------------------------------------------------------------------

def check_result_size_crossover():
    spec, results, rows = sweep(Experiment.VARY_CARDINALITY)
    fs, ds = curve(rows, "FS", "none"), curve(rows, "DS", "none")
    x = bench.crossovers(rows, "none")
    one_switch = len(x) == 1 and fs[0] < ds[0] and fs[-1] > ds[-1]
    strictly = all(a < b for a, b in zip(fs, fs[1:]))
    spread = (max(ds) - min(ds)) / min(ds)
    ok = one_switch and strictly and spread < 0.05
    return report(5, "result-size crossover", ok,
                  f"FS->DS crossovers at distinct_b {x} (exactly one), FS strictly increasing: {strictly}, "
                  f"DS spread {spread:.2%} (< 5%)")


# -- 6 ----------------------------------------------------------------------

def check_query_count_crossover():
    spec, results, rows = sweep(Experiment.VARY_QUERIES)
    q1_fs = all(curve(rows, "FS", m)[0] < curve(rows, "DS", m)[0] for m in ("bernoulli", "cluster"))
    fs, ds = curve(rows, "FS", "bernoulli"), curve(rows, "DS", "bernoulli")
    qs = list(spec.sweep)
    q_star = next((q for i, q in enumerate(qs) if all(d < f for f, d in zip(fs[i:], ds[i:]))), None)
    bytes_ok = True
    for m in ("bernoulli", "cluster"):
        dsb = curve(rows, "DS", m, "bytes_transferred")
        fsb = curve(rows, "FS", m, "bytes_transferred")
        bytes_ok &= len(set(dsb)) == 1 and fsb == [q * fsb[0] for q in qs]
    ok = q1_fs and q_star is not None and q_star <= 5 and bytes_ok
    return report(6, "query-count crossover", ok,
                  f"FS faster at Q=1: {q1_fs}, bernoulli Q* = {q_star} (<= 5), "
                  f"DS bytes constant and FS bytes = Q x single: {bytes_ok}")


# -- 7 ----------------------------------------------------------------------

def check_planner_fidelity():
    binding, misses, points = 0, [], 0
    sums_ok = True
    for name in Experiment:
        spec, results, _ = sweep(name)
        for c in bench.planner_agreement(spec, results, band=0.1):
            points += 1
            if c["binding"]:
                binding += 1
                if c["planned"] != c["simulated"]:
                    misses.append((name.value, c["sampling"], c["value"]))
        for res in results:
            e = res.point.estimate()
            d, f = e.ds_breakdown, e.fs_breakdown
            sums_ok &= e.ds_total == d.c_read + d.c_sample + d.c_cexec
            sums_ok &= e.fs_total == f.c_sample + f.c_wexec + f.c_write + f.c_cagg
    tie = CostEstimate(CostBreakdown(c_read=Fraction(1)), CostBreakdown(c_write=Fraction(1)))
    tie_ok = choose_mode(tie) is Mode.FS
    ok = not misses and sums_ok and tie_ok
    return report(7, "planner fidelity", ok,
                  f"{binding}/{points} points outside the 10% band, {len(misses)} disagreements {misses}, "
                  f"exact sums: {sums_ok}, tie -> FS: {tie_ok}")


# -- 8 ----------------------------------------------------------------------

def _fuzz_message(rng):
    kind = rng.randrange(4)
    if kind == 0:
        return QueryDispatch(rng.getrandbits(64), rng.randrange(3), rng.random(), rng.getrandbits(64),
                             rng.random() < 0.5, rng.randrange(1, 2**32), rng.randrange(1, 2**40))
    if kind == 1:
        return FsResult(rng.randbytes(rng.randrange(0, 256)))
    if kind == 2:
        return DsReadReq(rng.getrandbits(64), rng.getrandbits(64))
    return DsReadResp(rng.randbytes(rng.randrange(0, 256)))


def check_transport():
    rng = random.Random(8)
    rel = generate(GenSpec(50_000, 100, Order.SHUFFLED, 8))
    raw = rel.data.tobytes()
    region = MemoryRegion(1, memoryview(rel.data), cpu=CpuCounter())
    reads_ok = True
    for _ in range(1000):
        off = rng.randrange(len(raw))
        n = rng.randrange(len(raw) - off + 1)
        data, stats = one_sided_read(region, off, n, LinkModel())
        reads_ok &= bytes(data) == raw[off : off + n] and stats.worker_cpu_s == 0
    reads_ok &= region.cpu.busy_s == 0

    link = LinkModel()
    linear_ok = all(
        link.transfer_time(a + b) == link.transfer_time(a) + link.transfer_time(b) - link.latency_s
        for a, b in ((rng.getrandbits(40), rng.getrandbits(40)) for _ in range(1000)))

    left, right = socket.socketpair()
    fuzz_bad = 0
    with left, right:
        for _ in range(10**4):
            m = _fuzz_message(rng)
            send_message(left, m)
            fuzz_bad += recv_message(right) != m

    equal_payloads = True
    small = generate(GenSpec(30_000, 500, Order.SORTED_BY_B, 8))
    for sampling in (SampleSpec(), SampleSpec(Method.BERNOULLI, 0.1, 3), SampleSpec(Method.CLUSTER, 0.2, 3)):
        logs = []
        for backend in ("sim", "socket"):
            log = []
            with Cluster(ClusterSetup(workers=2, cluster_size=256, backend=backend), small, log) as c:
                c.dispatch([Query(0, sampling), Query(1, sampling)], Mode.FS)
                c.dispatch([Query(0, sampling), Query(1, sampling)], Mode.DS)
            logs.append(log)
        equal_payloads &= logs[0] == logs[1] and len(logs[0]) > 0
    ok = reads_ok and linear_ok and fuzz_bad == 0 and equal_payloads
    return report(8, "transport", ok,
                  f"byte-exact reads: {reads_ok}, exact linearity: {linear_ok}, "
                  f"socket fuzz mismatches {fuzz_bad}/10000, socket == sim payloads: {equal_payloads}")


CHECKS = [
    check_oracle_equivalence,
    check_sampling_statistics,
    check_group_miss,
    check_core_effects,
    check_result_size_crossover,
    check_query_count_crossover,
    check_planner_fidelity,
    check_transport,
]


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__.removeprefix("check_") for c in CHECKS])
def test_acceptance(check):
    assert check()


if __name__ == "__main__":
    sys.exit(0 if all([c() for c in CHECKS]) else 1)
