import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certlab.certificates import EQ3, OMNISCIENT
from certlab.design import DesignSpec, StageData
from certlab.errors import ConfigError, InsufficientDataError
from certlab.policies import (PolicyKind, SortedArms, omniscient_k, random_k_select,
                              sample_split_select, sort_by_empirical_mean, split_halves,
                              top_k_select, validation_k)


def _data(means, count=10):
    means = np.asarray(means, dtype=float)
    return StageData(np.full(means.size, count), means * count)


def test_strict_sort(rng):
    assert sort_by_empirical_mean(_data([0.2, 0.8, 0.5]), rng).order.tolist() == [1, 2, 0]


def test_single_arm_sort(rng):
    assert sort_by_empirical_mean(_data([0.3]), rng).order.tolist() == [0]


def test_tie_break_uniform_over_permutations(rng):
    data = _data([0.5, 0.5, 0.5])
    reps = 12_000
    freq = {}
    for _ in range(reps):
        key = tuple(sort_by_empirical_mean(data, rng).order)
        freq[key] = freq.get(key, 0) + 1
    assert len(freq) == 6
    p = 1 / 6
    for c in freq.values():
        assert abs(c / reps - p) <= 3 * math.sqrt(p * (1 - p) / reps)


def test_unpulled_arm_cannot_be_ranked(rng):
    with pytest.raises(InsufficientDataError):
        sort_by_empirical_mean(StageData([0, 2], [0.0, 1.0]), rng)


def test_top_k():
    s = SortedArms(np.array([1, 2, 0]), np.zeros(3))
    assert top_k_select(s, 2).tolist() == [1, 2]
    assert sorted(top_k_select(s, 3).tolist()) == [0, 1, 2]
    assert top_k_select(s, 1).tolist() == [1]


def test_sample_split_trace():
    k, values = validation_k([0, 1], [0.6, 0.4], 8, 0.1, EQ3)
    assert values[0] == pytest.approx(0.1672954, abs=1e-6)
    assert values[1] == pytest.approx(-0.0119367, abs=1e-6)
    assert k == 1


def test_sample_split_tiny_widths_keeps_all():
    k, _ = validation_k([0, 1, 2, 3], [0.1, 0.2, 0.3, 0.4], 10**12, 0.1, EQ3)
    assert k == 4


def test_sample_split_end_to_end(rng):
    # arm 0 wins on both halves
    samples = [np.array([1, 1, 1, 1, 0, 1, 1, 1.0]), np.array([0, 0, 1, 0, 0, 0, 0, 0.0])]
    design = DesignSpec(n=2, T=24, s1=16)
    assert sample_split_select(StageData.from_samples(samples), design, rng).tolist() == [0]


def test_split_halves_sizes(rng):
    u, v = split_halves([np.arange(7.0), np.arange(4.0)], rng)
    assert [x.size for x in u] == [4, 2] and [x.size for x in v] == [3, 2]
    assert sorted(np.concatenate([u[0], v[0]]).tolist()) == list(range(7))


def test_omniscient_values():
    s = SortedArms(np.array([0, 1, 2]), np.zeros(3))
    k, values = omniscient_k(s, [0.5, 0.7, 0.2], 200, 0.1, OMNISCIENT)
    np.testing.assert_allclose(values, [0.4241286, 0.5927017, 0.5685870], atol=1e-6)
    assert k == 2


def test_omniscient_sorted_means_pick_one():
    s = SortedArms(np.arange(4), np.zeros(4))
    assert omniscient_k(s, [0.9, 0.8, 0.7, 0.6], 10**12, 0.1)[0] == 1


def test_random_k_frequencies(rng):
    s = SortedArms(np.arange(10), np.zeros(10))
    reps = 10_000
    counts = np.bincount([random_k_select(s, rng).size for _ in range(reps)], minlength=11)[1:]
    assert np.all(np.abs(counts / reps - 0.1) <= 3 * math.sqrt(0.09 / reps))


def test_random_k_capped(rng):
    s = SortedArms(np.arange(10), np.zeros(10))
    assert max(random_k_select(s, rng, 3).size for _ in range(200)) <= 3


def test_parse():
    assert PolicyKind.parse("top_k:3").k == 3
    for bad in ("top_k", "top_k:0", "nope"):
        with pytest.raises(ConfigError):
            PolicyKind.parse(bad)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(1, 10_000))
def test_validation_k_maximises_values(v, s2):
    n = len(v)
    if s2 < 1:
        return
    k, values = validation_k(list(range(n)), v, s2, 0.1, EQ3)
    assert values[k - 1] == values.max()
    assert np.all(values[: k - 1] < values[k - 1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=6), st.integers(0, 2**31))
def test_sort_is_descending(successes, seed):
    data = StageData(np.full(len(successes), 5), np.array(successes, dtype=float))
    order = sort_by_empirical_mean(data, np.random.default_rng(seed)).order
    vals = np.array(successes)[order]
    assert np.all(np.diff(vals) <= 0)
