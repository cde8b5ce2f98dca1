"""First-stage pruning rules.

A policy looks at the first-stage statistics and returns the arms kept for
the second stage, as an integer array of arm indices. The top-k family keeps
a prefix of the empirical ordering; the rules differ only in how they pick
the prefix length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from certlab.arm_model import OutcomeModel, PriorSpec
from certlab.certificates import OMNISCIENT, BoundKind, half_width, nominal_half_width
from certlab.design import DesignSpec, StageData
from certlab.errors import ConfigError, DomainError, InsufficientDataError, PolicyError

# names accepted by PolicyKind.parse; top_k takes a ":<k>" suffix
TWO_STAGE_POLICIES = ("single_stage", "best_arm", "random_k", "top_k", "sample_split",
                      "omniscient", "greedy_prior", "two_stage_se")


@dataclass(frozen=True)
class SortedArms:
    order: np.ndarray
    tiebreak: np.ndarray

    @property
    def n(self) -> int:
        return self.order.size


@dataclass(frozen=True)
class PolicyKind:
    """A named pruning rule plus whatever configuration it needs."""

    name: str
    k: Optional[int] = None
    prior: Optional[PriorSpec] = None
    posterior_draws: int = 200
    simulate_noise: bool = False
    omniscient_bound: BoundKind = field(default=OMNISCIENT)

    @classmethod
    def parse(cls, spec: str, **kw) -> "PolicyKind":
        name, _, arg = spec.partition(":")
        if name not in TWO_STAGE_POLICIES:
            raise ConfigError(f"unknown policy {spec!r}")
        if name == "top_k":
            try:
                k = int(arg)
            except ValueError:
                raise ConfigError(f"top_k needs an integer k, got {spec!r}") from None
            if k < 1:
                raise ConfigError(f"top_k needs k >= 1, got {k}")
            return cls(name, k=k, **kw)
        if arg:
            raise ConfigError(f"policy {name!r} takes no argument")
        return cls(name, **kw)

    @property
    def label(self) -> str:
        return f"top_k:{self.k}" if self.name == "top_k" else self.name


def validate_arm_set(arms, n: int) -> np.ndarray:
    arms = np.asarray(arms, dtype=np.int64).reshape(-1)
    if arms.size == 0:
        raise PolicyError("policy retained no arms")
    if np.unique(arms).size != arms.size:
        raise PolicyError(f"duplicate arms in retained set {arms.tolist()}")
    if arms.min() < 0 or arms.max() >= n:
        raise PolicyError(f"retained arms {arms.tolist()} outside [0, {n})")
    return arms


def sort_by_empirical_mean(data: StageData, rng: np.random.Generator) -> SortedArms:
    """Arms in descending order of empirical mean, ties broken by fresh uniform draws."""
    if np.any(data.counts < 1):
        raise InsufficientDataError("every arm needs at least one pull to be ranked")
    return _sort_desc(data.sums / data.counts, rng)


def _sort_desc(values, rng):
    tiebreak = rng.random(len(values))
    # lexsort keys: last is primary
    order = np.lexsort((-tiebreak, -np.asarray(values, dtype=float)))
    return SortedArms(order=order, tiebreak=tiebreak)


def top_k_select(sorted_arms: SortedArms, k: int) -> np.ndarray:
    if not 1 <= k <= sorted_arms.n:
        raise DomainError(f"k must lie in [1, {sorted_arms.n}], got {k}")
    return sorted_arms.order[:k].copy()


def split_halves(samples, rng: np.random.Generator):
    """Randomly split each arm's samples into (U, V); an odd sample goes to U."""
    u, v = [], []
    for s in samples:
        s = np.asarray(s)
        if s.size < 2:
            raise InsufficientDataError("sample splitting needs at least two samples per arm")
        perm = rng.permutation(s.size)
        cut = (s.size + 1) // 2
        u.append(s[perm[:cut]])
        v.append(s[perm[cut:]])
    return u, v


def validation_k(order, v_means, s2: int, delta: float, bound: BoundKind):
    """Choose k from validation means along a training order.

    Returns ``(k, values)`` where ``values[i-1]`` is the best validation mean
    among the first ``i`` arms minus the width for ``i`` arms. Ties go to the
    smaller k.
    """
    v_along = np.asarray(v_means, dtype=float)[np.asarray(order)]
    kmax = min(v_along.size, s2)
    prefix_best = np.maximum.accumulate(v_along[:kmax])
    widths = np.array([half_width(i, s2, delta, bound) for i in range(1, kmax + 1)])
    values = prefix_best - widths
    return int(np.argmax(values)) + 1, values


def sample_split_select(stage1: StageData, design: DesignSpec,
                        rng: np.random.Generator) -> np.ndarray:
    """Train/validation choice of k, then top-k on the full first-stage data."""
    if stage1.samples is None:
        raise InsufficientDataError("sample splitting needs per-sample records")
    if stage1.n == 1:
        return np.array([0])
    u, v = split_halves(stage1.samples, rng)
    u_means = np.array([x.mean() for x in u])
    v_means = np.array([x.mean() for x in v])
    train = _sort_desc(u_means, rng)
    k, _ = validation_k(train.order, v_means, design.s2, design.delta, design.bound)
    return top_k_select(sort_by_empirical_mean(stage1, rng), k)


def omniscient_k(sorted_arms: SortedArms, means, s2: int, delta: float,
                 bound: BoundKind = OMNISCIENT):
    """Oracle k: best prefix maximum of the true means minus the width, smallest k on ties."""
    mu_along = np.asarray(means, dtype=float)[sorted_arms.order]
    kmax = min(mu_along.size, s2)
    prefix_best = np.maximum.accumulate(mu_along[:kmax])
    # the oracle's rule uses the fractional allocation i / s2
    widths = np.array([nominal_half_width(i, s2, delta, bound) for i in range(1, kmax + 1)])
    values = prefix_best - widths
    return int(np.argmax(values)) + 1, values


def omniscient_select(sorted_arms: SortedArms, means, design: DesignSpec,
                      bound: BoundKind = OMNISCIENT) -> np.ndarray:
    k, _ = omniscient_k(sorted_arms, means, design.s2, design.delta, bound)
    return top_k_select(sorted_arms, k)


def random_k_select(sorted_arms: SortedArms, rng: np.random.Generator,
                    kmax: Optional[int] = None) -> np.ndarray:
    kmax = sorted_arms.n if kmax is None else min(kmax, sorted_arms.n)
    k = int(rng.integers(1, kmax + 1))
    return top_k_select(sorted_arms, k)


def select_arms(policy: PolicyKind, stage1: StageData, design: DesignSpec, means,
                model: OutcomeModel, rng: np.random.Generator) -> np.ndarray:
    """Apply ``policy`` to first-stage data; returns validated arm indices."""
    n = stage1.n
    name = policy.name
    if name == "single_stage":
        arms = np.arange(n)
    elif name == "greedy_prior":
        from certlab.bayes import greedy_prior_policy
        arms = greedy_prior_policy(policy, stage1, design, model, rng)
    elif name == "two_stage_se":
        from certlab.baselines import two_stage_se_select
        arms = two_stage_se_select(stage1, design.delta, model)
    elif name == "sample_split":
        arms = sample_split_select(stage1, design, rng)
    else:
        ranked = sort_by_empirical_mean(stage1, rng)
        if name == "best_arm":
            arms = top_k_select(ranked, 1)
        elif name == "top_k":
            arms = top_k_select(ranked, policy.k)
        elif name == "random_k":
            arms = random_k_select(ranked, rng, design.s2)
        elif name == "omniscient":
            arms = omniscient_select(ranked, means, design, policy.omniscient_bound)
        else:
            raise ConfigError(f"unknown policy {name!r}")
    arms = validate_arm_set(arms, n)
    if arms.size > design.s2:
        raise PolicyError(f"policy kept {arms.size} arms but the next stage has {design.s2} pulls")
    return arms
