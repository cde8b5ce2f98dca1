"""Adaptive comparison designs, each reporting a certificate.

UCB and successive elimination allocate pull by pull, so the Hoeffding
certificate computed from their data ignores the adaptive sampling; their
results carry ``iid_violation=True``. The two-stage variants only adapt
between stages and keep valid certificates.

For Gaussian outcomes the confidence radii are scaled by ``2 * sd`` so that
``sd = 1/2`` reproduces the [0, 1]-bounded forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from certlab.arm_model import OutcomeModel, sample_outcomes
from certlab.certificates import EQ3, BoundKind, CertificateResult, width_for_count
from certlab.design import DesignSpec, StageData, TrialResult, make_result, run_uniform_stage
from certlab.errors import AllocationError, InfeasibleDesignError

THOMPSON_DRAWS = 10_000


@dataclass
class AdaptiveRun:
    counts: np.ndarray
    sums: np.ndarray
    eliminated_at: Optional[np.ndarray] = None

    @property
    def consumed(self) -> int:
        return int(self.counts.sum())

    def means(self) -> np.ndarray:
        return self.sums / np.maximum(self.counts, 1)


@numba.njit(cache=True)
def _ucb_loop(outcomes, T, bonus_scale):
    n = outcomes.shape[0]
    counts = np.zeros(n, np.int64)
    sums = np.zeros(n)
    for a in range(n):
        sums[a] += outcomes[a, 0]
        counts[a] = 1
    for t in range(n, T):
        lt = 2.0 * math.log(t)
        best = 0
        best_val = -np.inf
        for a in range(n):
            v = sums[a] / counts[a] + bonus_scale * math.sqrt(lt / counts[a])
            if v > best_val:
                best_val = v
                best = a
        sums[best] += outcomes[best, counts[best]]
        counts[best] += 1
    return counts, sums


@numba.njit(cache=True)
def _se_loop(outcomes, T, delta, radius_scale):
    n = outcomes.shape[0]
    counts = np.zeros(n, np.int64)
    sums = np.zeros(n)
    alive = np.ones(n, np.bool_)
    eliminated_at = np.full(n, -1, np.int64)
    n_alive = n
    used = 0
    t = 0
    while T - used >= n_alive:
        if n_alive == 1:
            # a lone survivor takes the rest of the budget
            for a in range(n):
                if alive[a]:
                    extra = T - used
                    for j in range(extra):
                        sums[a] += outcomes[a, counts[a] + j]
                    counts[a] += extra
                    used += extra
            break
        for a in range(n):
            if alive[a]:
                sums[a] += outcomes[a, counts[a]]
                counts[a] += 1
        used += n_alive
        t += 1
        r = radius_scale * math.sqrt(math.log(4.0 * n * t * t / delta) / (2.0 * t))
        top = -np.inf
        for a in range(n):
            if alive[a] and sums[a] / counts[a] > top:
                top = sums[a] / counts[a]
        for a in range(n):
            if alive[a] and sums[a] / counts[a] + r < top - r:
                alive[a] = False
                eliminated_at[a] = used
                n_alive -= 1
    return counts, sums, alive, eliminated_at


def se_radius(t: int, n: int, delta: float, model: Optional[OutcomeModel] = None) -> float:
    """Anytime confidence radius after ``t`` pulls per arm among ``n`` arms."""
    scale = 2 * (model.subgaussian_scale if model is not None else 0.5)
    return scale * math.sqrt(math.log(4 * n * t * t / delta) / (2 * t))


def _check_budget(T, n):
    if T < n:
        raise InfeasibleDesignError(f"budget {T} cannot pull {n} arms once each")


def _adaptive_result(run: AdaptiveRun, arm: int, means, delta, bound, policy, iid_violation=True,
                     **extra) -> TrialResult:
    m = int(run.counts[arm])
    emp = run.sums[arm] / m
    cert = CertificateResult(arm=int(arm), l=float(emp - width_for_count(m, delta, bound)), k=1,
                             per_arm_samples=m, delta=delta)
    retained = np.flatnonzero(run.counts > 0)
    return make_result(cert, retained, means, policy, run.consumed, iid_violation, **extra)


def ucb_counts(means, model: OutcomeModel, T: int, rng: np.random.Generator) -> AdaptiveRun:
    """UCB1 allocation of ``T`` pulls: every arm once, then the largest index."""
    means = np.asarray(means, dtype=float)
    _check_budget(T, means.size)
    outcomes = sample_outcomes(means, T, model, rng)
    counts, sums = _ucb_loop(outcomes, T, 2 * model.subgaussian_scale)
    return AdaptiveRun(counts, sums)


def ucb_run(means, model: OutcomeModel, T: int, delta: float, rng: np.random.Generator,
            bound: BoundKind = EQ3) -> TrialResult:
    """UCB with budget ``T``; certifies the most-pulled arm from its own samples."""
    run = ucb_counts(means, model, T, rng)
    arm = int(np.argmax(run.counts))
    return _adaptive_result(run, arm, means, delta, bound, "ucb")


def successive_elimination_counts(means, model: OutcomeModel, T: int, delta: float,
                                  rng: np.random.Generator) -> tuple:
    """Round-robin over surviving arms until the budget is spent.

    Returns ``(run, alive)``; ``run.eliminated_at[i]`` is the number of pulls
    spent when arm ``i`` was dropped, or -1 if it survived.
    """
    means = np.asarray(means, dtype=float)
    _check_budget(T, means.size)
    outcomes = sample_outcomes(means, T, model, rng)
    counts, sums, alive, elim = _se_loop(outcomes, T, delta, 2 * model.subgaussian_scale)
    return AdaptiveRun(counts, sums, elim), alive


def successive_elimination_run(means, model: OutcomeModel, T: int, delta: float,
                               rng: np.random.Generator, bound: BoundKind = EQ3) -> TrialResult:
    run, alive = successive_elimination_counts(means, model, T, delta, rng)
    emp = np.where(alive, run.means(), -np.inf)
    arm = int(np.argmax(emp))
    return _adaptive_result(run, arm, means, delta, bound, "succ_elim",
                            survivors=int(alive.sum()))


def two_stage_se_select(stage1: StageData, delta: float,
                        model: Optional[OutcomeModel] = None) -> np.ndarray:
    """One elimination step on uniform first-stage data; the leader always survives."""
    t = int(stage1.counts.min())
    if t < 1:
        raise InfeasibleDesignError("two-stage elimination needs every arm pulled")
    emp = stage1.sums / stage1.counts
    r = se_radius(t, stage1.n, delta, model)
    return np.flatnonzero(~(emp + r < emp.max() - r))


def thompson_probabilities(stage1: StageData, model: OutcomeModel, rng: np.random.Generator,
                           draws: int = THOMPSON_DRAWS) -> np.ndarray:
    """Monte Carlo estimate of P(arm i is the posterior argmax).

    Bernoulli arms use a Beta(1, 1) prior; Gaussian arms a flat prior, i.e.
    a Normal(mean, sd^2 / count) posterior.
    """
    if model.is_bernoulli:
        samples = rng.beta(1 + stage1.sums, 1 + stage1.counts - stage1.sums, size=(draws, stage1.n))
    else:
        counts = np.maximum(stage1.counts, 1)
        samples = (stage1.sums / counts
                   + model.sd / np.sqrt(counts) * rng.standard_normal((draws, stage1.n)))
    wins = np.bincount(np.argmax(samples, axis=1), minlength=stage1.n)
    return wins / draws


def thompson_allocation(p, s2: int) -> np.ndarray:
    """Deterministic proportional allocation ``floor(p_i * s2)``; the argmax arm gets at least one pull."""
    p = np.asarray(p, dtype=float)
    m = np.floor(p * s2).astype(np.int64)
    lead = int(np.argmax(p))
    if m[lead] == 0:
        m[lead] = 1
    if m.sum() == 0 or m.sum() > s2:
        raise AllocationError(f"allocation {m.tolist()} infeasible for budget {s2}")
    return m


def thompson_second_stage(stage1: StageData, s2: int, model: OutcomeModel, rng: np.random.Generator,
                          delta: float = 0.1, bound: BoundKind = EQ3, means=None,
                          draws: int = THOMPSON_DRAWS):
    """Allocate the second stage in proportion to Thompson probabilities.

    Returns ``(stage2, allocation, certificates)`` where ``certificates[i]``
    is arm ``i``'s lower bound from its own ``allocation[i]`` pulls (NaN when
    the arm got none). ``means`` are the true arm means used to draw outcomes.
    """
    p = thompson_probabilities(stage1, model, rng, draws)
    alloc = thompson_allocation(p, s2)
    n = stage1.n
    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n)
    certs = np.full(n, np.nan)
    for a in np.flatnonzero(alloc):
        x = sample_outcomes([means[a]], int(alloc[a]), model, rng)[0]
        counts[a] = alloc[a]
        sums[a] = x.sum()
        certs[a] = x.mean() - width_for_count(int(alloc[a]), delta, bound)
    return StageData(counts, sums), alloc, certs


def two_stage_thompson_run(design: DesignSpec, means, model: OutcomeModel, rng: np.random.Generator,
                           stage1_rng: Optional[np.random.Generator] = None,
                           draws: int = THOMPSON_DRAWS) -> TrialResult:
    means = np.asarray(means, dtype=float)
    stage1 = run_uniform_stage(means, range(means.size), design.s1, model,
                               stage1_rng if stage1_rng is not None else rng, keep_samples=False)
    stage2, alloc, certs = thompson_second_stage(stage1, design.s2, model, rng, design.delta,
                                                 design.bound, means, draws)
    arm = int(np.nanargmax(certs))
    cert = CertificateResult(arm=arm, l=float(certs[arm]), k=int((alloc > 0).sum()),
                             per_arm_samples=int(alloc[arm]), delta=design.delta)
    return make_result(cert, np.flatnonzero(alloc), means, "two_stage_thompson",
                       stage1.total + stage2.total)


def ucb_trial(design: DesignSpec, means, model, rng) -> TrialResult:
    return ucb_run(means, model, design.T, design.delta, rng, design.bound)


def succ_elim_trial(design: DesignSpec, means, model, rng) -> TrialResult:
    return successive_elimination_run(means, model, design.T, design.delta, rng, design.bound)
