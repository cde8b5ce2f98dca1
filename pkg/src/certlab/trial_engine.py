"""Simulating uniform-allocation trials end to end.

``run_trial`` plays one two-stage trial: a uniform first stage over every
arm, one pruning decision, a uniform second stage over the survivors and a
certificate for the best survivor. ``run_multi_stage`` repeats the prune
step over up to five stages.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from certlab.arm_model import OutcomeModel, as_mean_vector
from certlab.certificates import CertificateResult, width_for_count
from certlab.design import (DesignSpec, StageData, TrialResult, certify_uniform, make_result,
                            run_uniform_stage)
from certlab.errors import ConfigError, InfeasibleDesignError
from certlab.policies import PolicyKind, select_arms

# policies that need raw samples rather than sufficient statistics
_NEEDS_SAMPLES = ("sample_split",)


def _as_policy(policy) -> PolicyKind:
    return PolicyKind.parse(policy) if isinstance(policy, str) else policy


def run_single_stage(design: DesignSpec, means, model: OutcomeModel,
                     rng: np.random.Generator) -> TrialResult:
    """One uniform pass of the whole budget over every arm."""
    means = as_mean_vector(means)
    arms = np.arange(means.size)
    data = run_uniform_stage(means, arms, design.T, model, rng, keep_samples=False)
    cert = certify_uniform(data, arms, design.T, design.delta, design.bound, design.bonferroni)
    return make_result(cert, arms, means, "single_stage", data.total)


def run_trial(design: DesignSpec, policy, means, model: OutcomeModel, rng: np.random.Generator,
              stage1_rng: Optional[np.random.Generator] = None) -> TrialResult:
    """One two-stage trial.

    ``stage1_rng`` drives the first-stage pulls when given, so several
    policies can be compared on identical first-stage data; ``rng`` drives
    the policy's own randomness and the second stage.
    """
    policy = _as_policy(policy)
    means = as_mean_vector(means)
    if means.size != design.n:
        raise ConfigError(f"design has n={design.n} arms but {means.size} means were given")
    if policy.name == "single_stage":
        return run_single_stage(design, means, model, rng)

    all_arms = np.arange(design.n)
    if design.s1 == 0:
        if policy.name != "greedy_prior":
            raise ConfigError(f"policy {policy.label!r} needs first-stage data (s1 > 0)")
        stage1 = StageData.empty(design.n)
    else:
        stage1 = run_uniform_stage(means, all_arms, design.s1, model,
                                   stage1_rng if stage1_rng is not None else rng,
                                   keep_samples=policy.name in _NEEDS_SAMPLES)
    retained = select_arms(policy, stage1, design, means, model, rng)
    stage2 = run_uniform_stage(means, retained, design.s2, model, rng, keep_samples=False)
    cert = certify_uniform(stage2, retained, design.s2, design.delta, design.bound,
                           design.bonferroni)
    return make_result(cert, retained, means, policy.label, stage1.total + stage2.total)


def stage_budgets(T: int, stages: int) -> list:
    """Even split of ``T`` over the stages, remainder to the last."""
    base = T // stages
    return [base] * (stages - 1) + [T - base * (stages - 1)]


def run_multi_stage(design: DesignSpec, policy, means, model: OutcomeModel,
                    rng: np.random.Generator,
                    stage1_rng: Optional[np.random.Generator] = None) -> TrialResult:
    """Uniform stages with the policy pruning between consecutive stages.

    The budget is split evenly (``design.s1`` is ignored). At each prune the
    policy sees the pooled data of the surviving arms and treats the next
    stage's budget as its second stage. With ``design.last_stage_only`` the
    certificate uses the final stage alone; otherwise it pools every stage
    for the surviving arms, which is a heuristic because earlier stages
    chose those arms.
    """
    policy = _as_policy(policy)
    means = as_mean_vector(means)
    stages = design.stages
    if not 2 <= stages <= 5:
        raise ConfigError(f"multi-stage trials need 2..5 stages, got {stages}")
    budgets = stage_budgets(design.T, stages)

    alive = np.arange(design.n)
    pooled = None
    total = 0
    data = None
    for j, budget in enumerate(budgets):
        gen = stage1_rng if (j == 0 and stage1_rng is not None) else rng
        stage = run_uniform_stage(means, alive, budget, model, gen,
                                  keep_samples=policy.name in _NEEDS_SAMPLES)
        total += stage.total
        data = stage
        pooled = stage if pooled is None else pooled.pooled(stage)
        if j == stages - 1:
            break
        if budgets[j + 1] < 1:
            raise InfeasibleDesignError("empty stage budget")
        sub = pooled.subset(alive)
        sub_design = DesignSpec(n=alive.size, T=budget + budgets[j + 1], s1=budget,
                                delta=design.delta, bound=design.bound)
        keep = select_arms(policy, sub, sub_design, means[alive], model, rng)
        alive = alive[keep]

    if design.last_stage_only:
        cert = certify_uniform(data, alive, budgets[-1], design.delta, design.bound,
                               design.bonferroni)
        mode = "last_stage"
    else:
        counts = pooled.counts[alive]
        emp = pooled.sums[alive] / counts
        d = design.delta / alive.size if design.bonferroni else design.delta
        lower = np.array([e - width_for_count(int(m), d, design.bound) for e, m in zip(emp, counts)])
        best = int(np.argmax(lower))
        cert = CertificateResult(arm=int(alive[best]), l=float(lower[best]), k=int(alive.size),
                                 per_arm_samples=int(counts[best]), delta=design.delta)
        mode = "all_data"
    return make_result(cert, alive, means, policy.label, total,
                       iid_violation=not design.last_stage_only, mode=mode,
                       pooled_counts=pooled.counts.tolist())
