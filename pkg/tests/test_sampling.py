import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shipwright.errors import InvalidSpecError
from shipwright.relation import ClusterLayout, GenSpec, Order, Relation, generate, layout
from shipwright.sampling import (
    Method,
    SampleSpec,
    bernoulli_sample,
    cluster_sample,
    groups_present,
    include_decision,
    include_mask,
    mix64,
    sample,
)

GAMMA = 0x9E3779B97F4A7C15


def test_mix64_matches_splitmix64_reference_stream():
    # first three outputs of splitmix64 seeded with 0
    expected = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert [mix64(k * GAMMA) for k in (1, 2, 3)] == expected


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_rate_extremes(seed, index):
    assert include_decision(seed, index, 1.0) is True
    assert include_decision(seed, index, 0.0) is False


def test_vector_matches_scalar():
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 2**63, size=2000, dtype=np.int64)
    for seed, rate in [(0, 0.1), (42, 0.5), (2**64 - 1, 0.01), (123456789, 0.999)]:
        vec = include_mask(seed, idx, rate)
        assert vec.tolist() == [include_decision(seed, int(i), rate) for i in idx]


def test_popcount_seed42():
    n, p = 10**5, 0.1
    sigma = math.sqrt(n * p * (1 - p))
    hits = int(include_mask(42, np.arange(n), p).sum())
    assert hits == 10054
    assert abs(hits - n * p) <= 6 * sigma


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        SampleSpec(Method.BERNOULLI, 1.5)
    with pytest.raises(InvalidSpecError):
        SampleSpec(Method.BERNOULLI, -0.1)
    assert SampleSpec(Method.NONE, 0.2).rate == 1.0


def test_bernoulli_extremes():
    rel = generate(GenSpec(1000, 10))
    assert bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 1.0, 3)).included_count == 1000
    assert bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 0.0, 3)).included_count == 0


def test_method_mismatch():
    rel = generate(GenSpec(10, 2))
    with pytest.raises(ValueError):
        bernoulli_sample(rel, SampleSpec(Method.CLUSTER, 0.5))
    with pytest.raises(ValueError):
        cluster_sample(rel, layout(rel, 4), SampleSpec(Method.BERNOULLI, 0.5))


def test_site_independence(shuffled_1m):
    spec = SampleSpec(Method.BERNOULLI, 0.1, 7)
    at_worker = bernoulli_sample(shuffled_1m, spec, cache=False)
    at_coordinator = bernoulli_sample(Relation(shuffled_1m.data.copy()), spec, cache=False)
    assert np.array_equal(at_worker.positions(), at_coordinator.positions())
    # partitioned evaluation selects the same tuples as one pass
    parts = shuffled_1m.split(7)
    pieces = np.concatenate([bernoulli_sample(p, spec).positions() for p in parts])
    assert np.array_equal(pieces, at_worker.positions())


@pytest.mark.parametrize("n", [10**5, 10**6])
@pytest.mark.parametrize("p", [0.01, 0.1, 0.5])
def test_bernoulli_size_concentration(n, p):
    rel = Relation.from_b(np.zeros(n, dtype=np.int64))
    view = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, p, 2024))
    assert abs(view.included_count - n * p) <= 6 * math.sqrt(n * p * (1 - p))


def test_cluster_found_seed_selects_second_cluster():
    # oracle: enumerate seeds with the scalar decision until cluster 0 is out and 1 is in
    seed = next(s for s in range(1000)
                if not include_decision(s, 0, 0.5) and include_decision(s, 1, 0.5))
    rel = Relation.from_b(np.arange(8))
    view = cluster_sample(rel, layout(rel, 4), SampleSpec(Method.CLUSTER, 0.5, seed))
    assert view.included_ranges == [(4, 8)]


def test_cluster_full_rate():
    rel = generate(GenSpec(1000, 10))
    view = cluster_sample(rel, layout(rel, 64), SampleSpec(Method.CLUSTER, 1.0, 1))
    assert view.included_count == 1000
    assert len(view.included_ranges) == layout(rel, 64).cluster_count


def test_cluster_closure_1000_seeds():
    rel = Relation.from_b(np.zeros(5000, dtype=np.int64))
    lay = layout(rel, 64)
    for seed in range(1000):
        view = cluster_sample(rel, lay, SampleSpec(Method.CLUSTER, 0.3, seed))
        for lo, hi in view.included_ranges:
            k = lay.cluster_of(lo)
            assert (lo, hi) == lay.cluster_range(k)


@given(st.integers(1, 3000), st.integers(1, 200), st.integers(1, 6), st.integers(0, 2**64 - 1),
       st.floats(0, 1))
@settings(max_examples=80, deadline=None)
def test_cluster_closure_across_partitions(n, size, parts, seed, rate):
    rel = Relation.from_b(np.zeros(n, dtype=np.int64))
    lay = layout(rel, size)
    spec = SampleSpec(Method.CLUSTER, rate, seed)
    whole = cluster_sample(rel, lay, spec).index_set()
    pieces = set()
    for part in rel.split(min(parts, n)):
        pieces |= cluster_sample(part, lay, spec).index_set()
    assert pieces == whole
    for i in whole:
        lo, hi = lay.cluster_range(lay.cluster_of(i))
        assert set(range(lo, hi)) <= whole


def test_access_discipline():
    rel = Relation.from_b(np.zeros(100_000, dtype=np.int64))
    bern = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 0.1, 1))
    assert bern.touched == 100_000 and bern.decisions == 100_000
    clus = cluster_sample(rel, layout(rel, 100), SampleSpec(Method.CLUSTER, 0.1, 1))
    assert clus.touched == clus.included_count < 100_000
    assert clus.decisions == 1000


def test_groups_present_trivial():
    rel = generate(GenSpec(1000, 25))
    assert groups_present(sample(rel, SampleSpec())) == set(range(1, 26))
    empty = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 0.0))
    assert groups_present(empty) == set()


def test_group_miss_pathology(sorted_groups):
    lay = layout(sorted_groups, 100)
    clus = cluster_sample(sorted_groups, lay, SampleSpec(Method.CLUSTER, 0.1, 11))
    bern = bernoulli_sample(sorted_groups, SampleSpec(Method.BERNOULLI, 0.1, 11))
    frac_c = len(groups_present(clus)) / 10**4
    frac_b = len(groups_present(bern)) / 10**4
    assert 0.07 <= frac_c <= 0.13
    assert frac_b > 0.999


def test_ranges_and_positions_agree():
    rel = generate(GenSpec(3000, 10, Order.SHUFFLED, 1))
    view = bernoulli_sample(rel, SampleSpec(Method.BERNOULLI, 0.4, 5))
    expanded = [i for lo, hi in view.included_ranges for i in range(lo, hi)]
    assert expanded == view.positions().tolist()
    starts = np.array([s for s, _ in view.included_ranges])
    assert (np.diff(starts) > 0).all()
