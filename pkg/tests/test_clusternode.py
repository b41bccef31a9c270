import math
from fractions import Fraction

import numpy as np
import pytest

from shipwright.clusternode import Cluster, dispatch, run_data_shipping, run_function_shipping
from shipwright.config import ClusterSetup
from shipwright.execution import GroupCounts, Query, oracle_group_counts
from shipwright.planner import Mode
from shipwright.relation import GenSpec, Order, generate, layout
from shipwright.sampling import Method, SampleSpec, sample


@pytest.fixture(scope="module")
def two_groups():
    return generate(GenSpec(200_000, 2, Order.SHUFFLED, 3))


def test_fs_example(two_groups):
    (res,), tel = run_function_shipping(ClusterSetup(), two_groups, [Query()])
    assert res == GroupCounts.from_mapping({1: 100_000, 2: 100_000})
    assert tel.bytes_transferred == 32 + 32
    assert tel.mode is Mode.FS


def test_fs_core_doubling_halves_cpu_phase(two_groups):
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1, 1))]
    _, t7 = run_function_shipping(ClusterSetup(worker_cores=7), two_groups, batch)
    _, t14 = run_function_shipping(ClusterSetup(worker_cores=14), two_groups, batch)
    b7, b14 = t7.breakdown, t14.breakdown
    assert b14.c_sample + b14.c_wexec == (b7.c_sample + b7.c_wexec) / 2
    assert t14.worker_cpu_s == t7.worker_cpu_s / 2
    assert t14.bytes_transferred == t7.bytes_transferred


@pytest.mark.parametrize("q", [1, 2, 5])
def test_fs_bytes_scale_with_batch(two_groups, q):
    batch = [Query(i, SampleSpec(Method.BERNOULLI, 0.1, 1)) for i in range(q)]
    _, tel = run_function_shipping(ClusterSetup(), two_groups, batch)
    assert tel.bytes_transferred == q * 64


def test_ds_core_independence(two_groups):
    batch = [Query()]
    tels = [run_data_shipping(ClusterSetup(worker_cores=c), two_groups, batch)[1] for c in range(1, 29)]
    for t in tels:
        assert t.worker_cpu_s == 0
        assert (t.response_time_s, t.bytes_transferred, t.breakdown) == \
            (tels[0].response_time_s, tels[0].bytes_transferred, tels[0].breakdown)


@pytest.mark.parametrize("q", [1, 3, 5])
def test_ds_reads_once_per_batch(two_groups, q):
    _, tel = run_data_shipping(ClusterSetup(), two_groups, [Query(i) for i in range(q)])
    assert tel.bytes_transferred == 16 * two_groups.row_count


def test_ds_cluster_volume_binomial_bound():
    n, size, p = 10**6, 1024, 0.1
    rel = generate(GenSpec(n, 10, Order.SHUFFLED, 1))
    _, tel = run_data_shipping(ClusterSetup(cluster_size=size), rel,
                               [Query(0, SampleSpec(Method.CLUSTER, p, 21))])
    k = math.ceil(n / size)
    sigma = math.sqrt(k * p * (1 - p))
    assert abs(tel.bytes_transferred - p * 16 * n) <= (6 * sigma + 1) * 16 * size


def test_ds_mixed_methods_rejected(two_groups):
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1)), Query(1, SampleSpec(Method.CLUSTER, 0.1))]
    with pytest.raises(ValueError):
        run_data_shipping(ClusterSetup(), two_groups, batch)


def test_empty_batch_rejected(two_groups):
    with pytest.raises(ValueError):
        run_function_shipping(ClusterSetup(), two_groups, [])


@pytest.mark.parametrize("workers", [1, 2, 5])
@pytest.mark.parametrize("sampling", [SampleSpec(), SampleSpec(Method.BERNOULLI, 0.1, 9),
                                      SampleSpec(Method.CLUSTER, 0.25, 9)], ids=lambda s: s.method.value)
def test_fs_equals_ds_equals_oracle(workers, sampling):
    rel = generate(GenSpec(50_000, 777, Order.SORTED_BY_B, 8))
    setup = ClusterSetup(workers=workers, cluster_size=100)
    batch = [Query(i, sampling) for i in range(3)]
    fs, _ = run_function_shipping(setup, rel, batch)
    ds, _ = run_data_shipping(setup, rel, batch)
    truth = oracle_group_counts(rel, sample(rel, sampling, layout(rel, 100)))
    assert fs == ds
    for r in fs:
        assert r.entries == truth.entries


def test_scaled_results_agree(two_groups):
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1, 4), scale_estimates=True)]
    fs, _ = run_function_shipping(ClusterSetup(workers=3), two_groups, batch)
    ds, _ = run_data_shipping(ClusterSetup(workers=3), two_groups, batch)
    assert fs == ds and fs[0].scaled


def test_more_workers_shrink_worker_cpu_phase(two_groups):
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1, 1))]
    phases = []
    for w in (1, 2, 4):
        _, tel = run_function_shipping(ClusterSetup(workers=w), two_groups, batch)
        phases.append(tel.breakdown.c_sample + tel.breakdown.c_wexec)
    assert phases[0] > phases[1] > phases[2]


def test_response_covers_each_phase(two_groups):
    for mode in (Mode.FS, Mode.DS):
        _, tel, _ = dispatch(ClusterSetup(workers=2), two_groups,
                             [Query(0, SampleSpec(Method.BERNOULLI, 0.1))] * 2, mode)
        assert all(tel.response_time_s >= v for v in tel.breakdown.as_dict().values())


def test_fs_response_non_increasing_in_cores(two_groups):
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1, 2))]
    times = [run_function_shipping(ClusterSetup(worker_cores=c), two_groups, batch)[1].response_time_s
             for c in range(1, 29)]
    assert all(a >= b for a, b in zip(times, times[1:]))


def test_auto_mode_choices():
    rel = generate(GenSpec(10**6, 2, Order.SHUFFLED, 1))
    batch = [Query(0, SampleSpec(Method.BERNOULLI, 0.1, 1))]
    _, _, mode = dispatch(ClusterSetup(worker_cores=28), rel, batch, Mode.AUTO)
    assert mode is Mode.FS
    _, tel, mode = dispatch(ClusterSetup(worker_cores=1), rel, batch, Mode.AUTO)
    assert mode is Mode.DS and tel.mode is Mode.DS
    assert tel.worker_cpu_s == 0


def test_timeout_flags_instead_of_raising(two_groups):
    setup = ClusterSetup(timeout_s=Fraction(1, 10**6))
    res, tel = run_data_shipping(setup, two_groups, [Query()])
    assert tel.timed_out
    assert res[0].total == two_groups.row_count
    _, tel = run_data_shipping(ClusterSetup(), two_groups, [Query()])
    assert not tel.timed_out


def test_deterministic_virtual_time(two_groups):
    batch = [Query(i, SampleSpec(Method.CLUSTER, 0.3, i)) for i in range(3)]
    a = run_function_shipping(ClusterSetup(workers=3), two_groups, batch)[1]
    b = run_function_shipping(ClusterSetup(workers=3), two_groups, batch)[1]
    assert (a.response_time_s, a.breakdown) == (b.response_time_s, b.breakdown)


def test_zero_rate_batch():
    rel = generate(GenSpec(10_000, 10))
    res, tel, _ = dispatch(ClusterSetup(), rel, [Query(0, SampleSpec(Method.CLUSTER, 0.0))], Mode.DS)
    assert res[0].entry_count == 0 and tel.bytes_transferred == 0
    assert np.isfinite(float(tel.response_time_s))
