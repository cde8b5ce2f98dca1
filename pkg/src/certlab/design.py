"""Trial geometry, per-stage sufficient statistics and trial results.

These types are shared by the trial engine, the policies and the adaptive
baselines, so they live apart from all three.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from certlab.arm_model import OutcomeModel, sample_outcomes
from certlab.certificates import EQ3, BoundKind, CertificateResult, half_width
from certlab.errors import ConfigError, InfeasibleDesignError

MAX_STAGES = 5


@dataclass(frozen=True)
class DesignSpec:
    """Budget split and confidence settings of a trial.

    ``s1`` pulls go to the uniform first stage and ``T - s1`` to the second.
    ``s1 = 0`` is allowed only for prior-based designs that prune on the
    prior alone.
    """

    n: int
    T: int
    s1: int
    delta: float = 0.1
    bound: BoundKind = EQ3
    stages: int = 2
    last_stage_only: bool = True
    bonferroni: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"need at least one arm, got n={self.n}")
        if not 0 <= self.s1 <= self.T:
            raise ConfigError(f"first-stage budget {self.s1} outside [0, T={self.T}]")
        if 0 < self.s1 < self.n:
            raise InfeasibleDesignError(f"first stage of {self.s1} pulls cannot cover {self.n} arms")
        if self.s2 < 1:
            raise InfeasibleDesignError("second stage has no budget")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not 1 <= self.stages <= MAX_STAGES:
            raise ConfigError(f"stages must lie in [1, {MAX_STAGES}], got {self.stages}")

    @property
    def s2(self) -> int:
        return self.T - self.s1

    @classmethod
    def from_fraction(cls, n, T, s1_fraction, **kw) -> "DesignSpec":
        return cls(n=n, T=T, s1=int(round(s1_fraction * T)), **kw)

    def replace(self, **kw) -> "DesignSpec":
        return dataclasses.replace(self, **kw)


@dataclass
class StageData:
    """Pull counts and outcome sums per arm, optionally with the raw samples.

    ``samples[i]`` holds the outcomes of arm ``i`` in pull order; it is kept
    only when a policy needs to re-split the data.
    """

    counts: np.ndarray
    sums: np.ndarray
    samples: Optional[list] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.sums = np.asarray(self.sums, dtype=float)
        if self.counts.shape != self.sums.shape:
            raise ConfigError("counts and sums must have the same shape")
        if np.any(self.counts < 0):
            raise ConfigError("pull counts must be non-negative")
        if np.any(self.sums[self.counts == 0] != 0):
            raise ConfigError("arms without pulls must have zero sum")

    @classmethod
    def empty(cls, n: int, keep_samples: bool = True) -> "StageData":
        samples = [np.empty(0) for _ in range(n)] if keep_samples else None
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n), samples)

    @classmethod
    def from_samples(cls, samples) -> "StageData":
        samples = [np.asarray(s, dtype=float) for s in samples]
        return cls(np.array([s.size for s in samples]), np.array([s.sum() for s in samples]), samples)

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def means(self) -> np.ndarray:
        """Empirical means; NaN for arms never pulled."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def subset(self, arms) -> "StageData":
        """Statistics of ``arms`` only, re-indexed 0..len(arms)-1."""
        arms = list(arms)
        samples = [self.samples[a] for a in arms] if self.samples is not None else None
        return StageData(self.counts[arms], self.sums[arms], samples)

    def pooled(self, other: "StageData") -> "StageData":
        if other.n != self.n:
            raise ConfigError("cannot pool stage data over different arm sets")
        samples = None
        if self.samples is not None and other.samples is not None:
            samples = [np.concatenate([a, b]) for a, b in zip(self.samples, other.samples)]
        return StageData(self.counts + other.counts, self.sums + other.sums, samples)


def run_uniform_stage(means, arms, budget: int, model: OutcomeModel,
                      rng: np.random.Generator, keep_samples: bool = True) -> StageData:
    """Pull every arm in ``arms`` exactly ``budget // len(arms)`` times.

    Leftover budget is discarded so all retained arms share one count.
    """
    means = np.asarray(means, dtype=float)
    arms = np.asarray(list(arms), dtype=np.int64)
    if arms.size == 0 or budget < arms.size:
        raise InfeasibleDesignError(f"budget {budget} cannot pull {arms.size} arms once each")
    m = budget // arms.size
    outcomes = sample_outcomes(means[arms], m, model, rng)

    counts = np.zeros(means.size, dtype=np.int64)
    sums = np.zeros(means.size)
    counts[arms] = m
    sums[arms] = outcomes.sum(axis=1)
    samples = None
    if keep_samples:
        samples = [np.empty(0) for _ in range(means.size)]
        for row, a in enumerate(arms):
            samples[a] = outcomes[row]
    return StageData(counts, sums, samples)


@dataclass
class TrialResult:
    """Outcome of one simulated trial under one policy."""

    certificate: CertificateResult
    retained: tuple
    true_best: float
    selected_mean: float
    policy: str = ""
    total_pulls: int = 0
    iid_violation: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def l(self) -> float:
        return self.certificate.l

    @property
    def normalized(self) -> Optional[float]:
        """``l / max_i mu_i``; None when the best mean is not positive."""
        if self.true_best > 0:
            return self.certificate.l / self.true_best
        return None

    @property
    def score(self) -> float:
        """Normalized certificate when defined, raw certificate otherwise."""
        norm = self.normalized
        return self.certificate.l if norm is None else norm

    @property
    def covered(self) -> bool:
        return self.certificate.l <= self.selected_mean


def certify_uniform(stage2: StageData, retained, s2: int, delta: float,
                    bound: BoundKind = EQ3, bonferroni: bool = False) -> CertificateResult:
    """Best per-arm certificate over ``retained`` after a uniform second stage."""
    retained = list(retained)
    k = len(retained)
    width = half_width(k, s2, delta, bound, bonferroni)
    emp = stage2.sums[retained] / stage2.counts[retained]
    best = int(np.argmax(emp))
    return CertificateResult(arm=retained[best], l=float(emp[best] - width), k=k,
                             per_arm_samples=s2 // k, delta=delta)


def make_result(cert: CertificateResult, retained, means, policy: str, total_pulls: int,
                iid_violation: bool = False, **extra) -> TrialResult:
    means = np.asarray(means, dtype=float)
    return TrialResult(certificate=cert, retained=tuple(int(a) for a in retained),
                       true_best=float(means.max()), selected_mean=float(means[cert.arm]),
                       policy=policy, total_pulls=int(total_pulls),
                       iid_violation=iid_violation, extra=extra)
