import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certlab.certificates import half_width
from certlab.design import DesignSpec
from certlab.arm_model import OutcomeModel, PriorSpec
from certlab.errors import VerificationError
from certlab.verification import (EnumInstance, check_proposition1, empirical_coverage,
                                  exact_policy_value, expected_max_mean, expected_max_mean_enum,
                                  lemma1_exact, lemma1_monte_carlo, proposition1_bound,
                                  proposition1_terms, random_instance, random_policy,
                                  rank_tail_probabilities, top_k_counterpart, top_k_distribution,
                                  verify_lemma1, verify_lemma2, verify_theorem1)

BERN = OutcomeModel.bernoulli()


def _top_k(k):
    return lambda x: top_k_distribution(x, k)


def test_single_arm_value():
    inst = EnumInstance((0.37,), 2, 10)
    assert exact_policy_value(inst, _top_k(1)) == pytest.approx(0.37 - half_width(1, 10, 0.1))


def test_degenerate_two_arms():
    inst = EnumInstance((1.0, 0.0), 1, 10)
    assert exact_policy_value(inst, _top_k(1), exchangeable=False) == pytest.approx(
        1 - half_width(1, 10, 0.1), abs=1e-15)


def test_nine_profile_value():
    # 43/64 = E[mu of the top-1 arm], from a rational 9-term enumeration
    inst = EnumInstance((0.75, 0.25), 2, 20)
    expected = 43 / 64 - 0.2736664152555987
    assert exact_policy_value(inst, _top_k(1), exchangeable=False) == pytest.approx(expected, abs=1e-12)
    assert exact_policy_value(inst, _top_k(1)) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=3), st.integers(1, 6))
def test_cdf_product_matches_enumeration(means, m):
    assert expected_max_mean(means, m) == pytest.approx(expected_max_mean_enum(means, m), abs=1e-12)


def test_top_k_is_its_own_counterpart(rng):
    inst = random_instance(rng)
    pol = {x: top_k_distribution(x, 2) for x in inst.profiles()}
    cp = top_k_counterpart(inst, pol)
    assert exact_policy_value(inst, cp) == pytest.approx(exact_policy_value(inst, pol), abs=1e-15)


def test_worst_arm_policy_strictly_improved():
    inst = EnumInstance((0.8, 0.3), 2, 30)
    worst = {x: {frozenset(s): w for s, w in top_k_distribution(tuple(-v for v in x), 1).items()}
             for x in inst.profiles()}
    assert (exact_policy_value(inst, top_k_counterpart(inst, worst))
            > exact_policy_value(inst, worst) + 1e-6)


def test_lemma2_random_policies(rng):
    rep = verify_lemma2(random_instance(rng), trials=100, rng=rng)
    assert rep.passed and rep.details["violations"] == 0


def test_fixed_labels_break_top_k_optimality():
    # keeping arm 0 regardless of the data beats every top-k policy when labels are known
    inst = EnumInstance((0.9, 0.1), 1, 100)
    oracle = exact_policy_value(inst, lambda x: {0}, exchangeable=False)
    rep = verify_theorem1(inst, exchangeable=False)
    assert oracle == pytest.approx(0.77761, abs=1e-5)
    assert rep.bound == pytest.approx(oracle, abs=1e-12)
    assert rep.value == pytest.approx(0.76798, abs=1e-5)
    assert not rep.passed


@pytest.mark.parametrize("means,pulls", [((0.9, 0.1), 1), ((0.5, 0.5), 1), ((0.5, 0.5), 2),
                                         ((0.7, 0.4), 2), ((0.62,), 2)])
def test_theorem1(means, pulls):
    rep = verify_theorem1(EnumInstance(means, pulls, 20))
    assert rep.passed and abs(rep.bound - rep.value) <= 1e-12


def test_theorem1_size_limit():
    with pytest.raises(VerificationError):
        verify_theorem1(EnumInstance((0.1, 0.2, 0.3), 1, 10))


def test_lemma1_exact_dominance():
    inst = EnumInstance((0.3, 0.5, 0.7), 2, 10)
    probs = lemma1_exact(inst)
    np.testing.assert_allclose(probs.sum(axis=0), 1)
    np.testing.assert_allclose(probs.sum(axis=1), 1)
    tails = rank_tail_probabilities(probs, inst.means, np.arange(0.1, 1.0, 0.1))
    assert np.all(np.diff(tails, axis=0) <= 1e-12)


def test_lemma1_monte_carlo_matches_exact(rng):
    inst = EnumInstance((0.2, 0.45, 0.8), 2, 10)
    th = np.arange(0.1, 1.0, 0.1)
    exact = rank_tail_probabilities(lemma1_exact(inst), inst.means, th)
    p, se, _ = lemma1_monte_carlo(inst.means, 2, 50_000, rng, th)
    assert np.all(np.abs(p - exact) <= 4 * se + 1e-12)


def test_lemma1_report(rng):
    assert verify_lemma1((0.3, 0.5, 0.7), 2, 20_000, rng).passed


def test_prop1_trivial_cases():
    assert proposition1_terms([0.6], 100, 100, 1, 0.1, 1) == (0.0, 0.0)
    first, second = proposition1_terms([0.9, 0.5, 0.2], 300, 300, 3, 0.1, 3)
    assert second == 0.0


def test_prop1_frozen_example():
    f_star = 0.7
    b = proposition1_bound([0.8, 0.5, 0.2], 300, 300, 3, 0.1, 1, f_star)
    assert f_star - b == pytest.approx(4.335633e-05, rel=1e-6)
    assert b < f_star


def test_prop1_monte_carlo(rng):
    mu = np.linspace(0.1, 0.9, 10)
    assert check_proposition1(mu, 500, 500, 0.1, 150, rng).passed


def test_coverage_deterministic_arm(rng):
    design = DesignSpec(n=1, T=200, s1=100)
    assert empirical_coverage(design, "best_arm", [1.0], BERN, 50, rng) == 1.0


def test_coverage_large_delta(rng):
    design = DesignSpec(n=5, T=1000, s1=300, delta=0.5)
    cov = empirical_coverage(design, "sample_split", PriorSpec.uniform01(), BERN, 2000, rng)
    assert cov >= 0.5 - 3 * math.sqrt(0.25 / 2000)
    assert cov > 0.8


def test_enum_limits():
    with pytest.raises(VerificationError):
        EnumInstance((0.1, 0.2, 0.3, 0.4), 1, 10)
    with pytest.raises(VerificationError):
        EnumInstance((0.1,), 4, 10)
