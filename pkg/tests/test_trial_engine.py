import numpy as np
import pytest

from certlab.arm_model import OutcomeModel
from certlab.certificates import half_width
from certlab.design import DesignSpec, StageData, run_uniform_stage
from certlab.errors import ConfigError, InfeasibleDesignError
from certlab.policies import PolicyKind
from certlab.trial_engine import run_multi_stage, run_trial, stage_budgets

BERN = OutcomeModel.bernoulli()


def test_floor_division_discards_leftover(rng):
    data = run_uniform_stage([0.5, 0.5], [0, 1], 5, BERN, rng)
    assert data.counts.tolist() == [2, 2]
    assert data.total == 4


def test_degenerate_arm(rng):
    data = run_uniform_stage([1.0], [0], 7, BERN, rng)
    assert data.counts.tolist() == [7] and data.sums.tolist() == [7.0]


def test_uniform_stage_concentration(rng):
    mu = np.linspace(0.05, 0.95, 10)
    hits = 0
    for _ in range(50):
        data = run_uniform_stage(mu, range(10), 3000, BERN, rng)
        hits += np.sum(np.abs(data.means() - mu) <= 4 * np.sqrt(0.25 / 300))
    assert hits / 50 >= 9


def test_unpulled_arms_report_nan():
    assert np.isnan(StageData([0, 3], [0.0, 2.0]).means()[0])


@pytest.mark.parametrize("policy", ["best_arm", "sample_split", "random_k", "omniscient", "top_k:1"])
def test_single_arm_certificate(policy, rng):
    design = DesignSpec(n=1, T=400, s1=100)
    res = run_trial(design, policy, [0.4], BERN, rng)
    assert res.retained == (0,)
    emp = res.certificate.l + half_width(1, 300, 0.1)
    assert emp * 300 == pytest.approx(round(emp * 300))


def test_separated_arms_keep_best(rng):
    design = DesignSpec(n=2, T=400, s1=200)
    ls = []
    for _ in range(1000):
        res = run_trial(design, "top_k:1", [0.9, 0.1], BERN, rng)
        assert res.retained == (0,)
        ls.append(res.l)
    assert np.mean(ls) == pytest.approx(0.9 - half_width(1, 200, 0.1), abs=0.01)


def test_equal_means_symmetry(rng):
    design = DesignSpec(n=4, T=400, s1=100)
    a = [run_trial(design, "top_k:2", [0.5] * 4, BERN, rng).score for _ in range(5000)]
    b = [run_trial(design, "top_k:2", [0.5] * 4, BERN, rng).score for _ in range(5000)]
    se = np.sqrt(np.var(a) / 5000 + np.var(b) / 5000)
    assert abs(np.mean(a) - np.mean(b)) <= 3 * se


def test_two_stage_multi_matches_run_trial():
    design = DesignSpec(n=6, T=1200, s1=600)
    mu = np.linspace(0.2, 0.8, 6)
    a = run_trial(design, "best_arm", mu, BERN, np.random.default_rng(3))
    b = run_multi_stage(design, "best_arm", mu, BERN, np.random.default_rng(3))
    assert a.l == b.l and a.retained == b.retained


def test_multi_stage_all_data_accounting(rng):
    design = DesignSpec(n=5, T=3000, s1=1000, stages=3, last_stage_only=False)
    res = run_multi_stage(design, "top_k:3", np.linspace(0.1, 0.9, 5), BERN, rng)
    assert res.iid_violation and res.extra["mode"] == "all_data"
    assert sum(res.extra["pooled_counts"]) == res.total_pulls


def test_five_stages_no_better_than_two():
    mu_rng = np.random.default_rng(0)
    rng = np.random.default_rng(1)
    two, five = [], []
    for _ in range(20):
        mu = mu_rng.random(10)
        for _ in range(15):
            two.append(run_multi_stage(DesignSpec(10, 5000, 2500, stages=2), "sample_split",
                                       mu, BERN, rng).score)
            five.append(run_multi_stage(DesignSpec(10, 5000, 2500, stages=5), "sample_split",
                                        mu, BERN, rng).score)
    assert np.mean(five) <= np.mean(two)


def test_stage_budgets():
    assert stage_budgets(10, 3) == [3, 3, 4]


def test_design_validation():
    with pytest.raises(InfeasibleDesignError):
        DesignSpec(n=10, T=100, s1=5)
    with pytest.raises(InfeasibleDesignError):
        DesignSpec(n=2, T=100, s1=100)
    with pytest.raises(ConfigError):
        DesignSpec(n=2, T=100, s1=10, delta=0)
    with pytest.raises(ConfigError):
        run_trial(DesignSpec(n=3, T=100, s1=0), "sample_split", [0.1, 0.2, 0.3], BERN,
                  np.random.default_rng(0))


def test_greedy_prior_without_first_stage(rng):
    from certlab.arm_model import PriorSpec
    policy = PolicyKind.parse("greedy_prior", prior=PriorSpec.point([0.1, 0.9, 0.2]))
    res = run_trial(DesignSpec(n=3, T=600, s1=0), policy, [0.1, 0.9, 0.2], BERN, rng)
    assert res.retained == (1,)
