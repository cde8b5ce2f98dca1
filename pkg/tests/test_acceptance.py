"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are written past
pytest's capture so they appear in the normal log).
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from certlab import harness
from certlab.arm_model import OutcomeModel, PriorSpec
from certlab.bayes import brute_force_select, greedy_prior_select
from certlab.design import DesignSpec
from certlab.verification import (EnumInstance, check_proposition1, empirical_coverage,
                                  random_instance, verify_lemma1, verify_lemma2, verify_theorem1)


@pytest.fixture
def report(capsys):
    def emit(number, ok, text):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {str(number):>2}: {text}")
        assert ok, text
    return emit


def _means(rows, axis_value=None):
    return {r.policy: r.mean_norm_cert for r in rows
            if axis_value is None or r.sweep_value == axis_value}


def test_01_certificate_coverage(report):
    start = time.perf_counter()
    design = DesignSpec.from_fraction(10, 10_000, 0.3, delta=0.1)
    cov = empirical_coverage(design, "sample_split", PriorSpec.uniform01(), OutcomeModel.bernoulli(),
                             10_000, np.random.default_rng(101))
    floor = 0.9 - 3 * math.sqrt(0.09 / 10_000)
    secs = time.perf_counter() - start
    report(1, cov >= floor and secs < 60,
           f"coverage {cov:.4f} >= {floor:.4f} over 10^4 trials ({secs:.1f}s)")


def test_02_lemma2_exact(report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    reps = [verify_lemma2(random_instance(rng), trials=100, rng=rng) for _ in range(20)]
    violations = sum(r.details["violations"] for r in reps)
    worst = min(r.margin for r in reps)
    secs = time.perf_counter() - start
    report(2, violations == 0 and secs < 60,
           f"{violations} violations in 20x100 policies, worst margin {worst:.3e} ({secs:.1f}s)")


def test_03_theorem1_exact(report):
    cases = [((0.9, 0.1), 1), ((0.9, 0.1), 2), ((0.5, 0.5), 1), ((0.5, 0.5), 2),
             ((0.7, 0.4), 1), ((0.7, 0.4), 2), ((0.55, 0.35), 2), ((0.2, 0.05), 1)]
    gaps = []
    for means, pulls in cases:
        rep = verify_theorem1(EnumInstance(means, pulls, 20))
        gaps.append(abs(rep.bound - rep.value))
    report(3, max(gaps) <= 1e-12,
           f"best policy vs best top-k over {len(cases)} instances, max gap {max(gaps):.2e}")


def test_04_lemma1_monte_carlo(report):
    rng = np.random.default_rng(404)
    reps = [verify_lemma1(mu, 2, 100_000, rng) for mu in ((0.3, 0.5, 0.7), (0.15, 0.6, 0.65),
                                                        (0.05, 0.5, 0.95))]
    worst = min(r.value for r in reps)
    report(4, all(r.passed for r in reps),
           f"rank-tail dominance within 3 se, worst slack {worst:.4f}")


def test_05_greedy_ratio(report):
    # A multiplicative ratio only means something for a non-negative optimum;
    # when every set scores below zero the greedy pick must match brute force.
    rng = np.random.default_rng(505)
    violations, worst, negative = 0, math.inf, 0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 51))
        s2 = int(rng.integers(n, 50 * n))
        draws = rng.beta(1, rng.uniform(0.5, 4), size=(d, n))
        _, g = greedy_prior_select(draws, s2, 0.1, return_scores=True)
        _, best = brute_force_select(draws, s2, 0.1, return_score=True)
        if best < 0:
            negative += 1
            target = best
        else:
            target = (1 - 1 / math.e) * best
        worst = min(worst, g.max() - target)
        violations += g.max() < target - 1e-12
    report(5, violations == 0, f"{violations} violations on 200 instances "
                               f"({negative} with negative optimum), min slack {worst:.4f}")


def test_06_proposition1(report):
    rng = np.random.default_rng(606)
    reps = [check_proposition1(rng.random(10), 5000, 5000, 0.1, 300, rng) for _ in range(10)]
    worst = min(r.margin + r.details["tolerance"] for r in reps)
    tightest = min(r.margin for r in reps)
    report(6, all(r.passed for r in reps),
           f"sample-split value >= bound - 3 se on 10 configs, min (value - bound) {tightest:.4f}, "
           f"min slack incl. 3 se {worst:.4f}")


def test_07_fig1_margin(report):
    start = time.perf_counter()
    cfg = harness.ExperimentConfig(n=10, T=10_000, s1_fraction=0.3,
                                   policies=["single_stage", "sample_split"])
    m = _means(harness.run_experiment(cfg))
    secs = time.perf_counter() - start
    rel = m["sample_split"] / m["single_stage"] - 1
    report(7, 0.02 <= rel <= 0.15 and secs < 300,
           f"sample-split {m['sample_split']:.4f} vs single-stage {m['single_stage']:.4f}: "
           f"+{100 * rel:.2f}% (target 2-15%, {secs:.1f}s)")


def _fig2(T):
    cfg = dataclasses.replace(harness.figure_presets()["fig2"][0], sweep_axis=None, sweep_values=[],
                              T=T, policies=["best_arm", "sample_split", "omniscient"])
    return _means(harness.run_experiment(cfg))


def test_08_fig2_large_budget(report):
    m = _fig2(40_000)
    rel = abs(m["sample_split"] / m["omniscient"] - 1)
    report(8, rel <= 0.02, f"T=40000 sample-split {m['sample_split']:.4f} vs omniscient "
                           f"{m['omniscient']:.4f}: gap {100 * rel:.2f}% (target <= 2%)")


def test_09_fig2_small_budget(report):
    m = _fig2(1000)
    rel = 1 - m["best_arm"] / m["sample_split"]
    report(9, rel >= 0.05, f"T=1000 best-arm {m['best_arm']:.4f} vs sample-split "
                           f"{m['sample_split']:.4f}: best-arm lower by {100 * rel:.2f}% (target >= 5%)")


def test_10_fig5_prior(report):
    cfg = dataclasses.replace(harness.figure_presets()["fig5"][0], sweep_values=[4.0],
                              policies=["greedy_prior", "ucb"])
    m = _means(harness.run_experiment(cfg))
    rel = m["greedy_prior"] / m["ucb"] - 1
    report(10, rel >= 0.05, f"beta=4 greedy-prior {m['greedy_prior']:.4f} vs UCB {m['ucb']:.4f}: "
                            f"{100 * rel:+.2f}% (target >= +5%)")


def test_11_multistage(report):
    cfg = harness.figure_presets()["fig_multistage"][0]
    rows = harness.run_experiment(cfg)
    by_stage = {r.sweep_value: r.mean_norm_cert for r in rows}
    ok = all(by_stage[2] >= by_stage[s] for s in (3, 4, 5))
    report(11, ok, "last-stage certificates by stages: "
           + ", ".join(f"{s}:{v:.4f}" for s, v in sorted(by_stage.items())))


def test_12_determinism(report, tmp_path):
    a = harness.export(harness.run_figure("fig_multistage", master_seed=31), tmp_path / "a.csv")
    b = harness.export(harness.run_figure("fig_multistage", master_seed=31), tmp_path / "b.csv")
    c = harness.export(harness.run_figure("fig_box", master_seed=31), tmp_path / "c.csv")
    d = harness.export(harness.run_figure("fig_box", master_seed=31), tmp_path / "d.csv")
    same = a.read_bytes() == b.read_bytes() and c.read_bytes() == d.read_bytes()
    report(12, same, "fig_multistage and fig_box CSVs byte-identical across reruns")


def test_real_world_ordering(report):
    m = _means(harness.run_figure("fig7"))
    ok = m["greedy_prior"] > m["sample_split"] > m["single_stage"]
    report("7b", ok, f"stand-in effect sizes: prior {m['greedy_prior']:.4f} > split "
                     f"{m['sample_split']:.4f} > single {m['single_stage']:.4f}")
