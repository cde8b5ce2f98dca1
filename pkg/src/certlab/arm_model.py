"""Generative models for arm means and per-arm outcomes.

A :class:`PriorSpec` describes how the true mean vector of a trial is drawn,
an :class:`OutcomeModel` how a single pull of an arm is realised. Optional
:class:`MisspecNoise` perturbs the drawn means so that the world no longer
matches the prior handed to prior-based policies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from certlab.errors import ConfigError, DomainError

PRIOR_KINDS = ("uniform01", "uniform", "beta", "discrete", "point")
OUTCOME_KINDS = ("bernoulli", "gaussian")


@dataclass(frozen=True)
class MisspecNoise:
    """Gaussian noise added independently to every drawn arm mean."""

    mean: float = 0.0
    variance: float = 0.0

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ConfigError(f"misspecification variance must be >= 0, got {self.variance}")
        if not math.isfinite(self.mean):
            raise ConfigError("misspecification mean must be finite")


@dataclass(frozen=True)
class PriorSpec:
    """Distribution the arm means are drawn from, i.i.d. per arm.

    ``point`` is the exception: it fixes the whole mean vector.
    Use the classmethod constructors rather than filling fields by hand.
    """

    kind: str = "uniform01"
    alpha: float = 1.0
    beta: float = 1.0
    low: float = 0.0
    high: float = 1.0
    values: tuple = ()
    means: tuple = ()
    misspec: Optional[MisspecNoise] = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        if self.kind == "beta" and not (self.alpha > 0 and self.beta > 0):
            raise ConfigError(f"beta prior needs positive parameters, got ({self.alpha}, {self.beta})")
        if self.kind == "uniform" and not (self.low < self.high):
            raise ConfigError(f"uniform prior needs low < high, got [{self.low}, {self.high}]")
        if self.kind == "discrete":
            if len(self.values) == 0:
                raise ConfigError("discrete prior needs at least one support value")
            if not all(math.isfinite(v) for v in self.values):
                raise ConfigError("discrete prior values must be finite")
        if self.kind == "point":
            if len(self.means) == 0:
                raise ConfigError("point prior needs a non-empty mean vector")
            if not all(math.isfinite(v) for v in self.means):
                raise ConfigError("point prior means must be finite")

    @classmethod
    def uniform01(cls, misspec=None):
        return cls(kind="uniform01", misspec=misspec)

    @classmethod
    def uniform(cls, low, high, misspec=None):
        return cls(kind="uniform", low=float(low), high=float(high), misspec=misspec)

    @classmethod
    def beta_prior(cls, alpha, beta, misspec=None):
        return cls(kind="beta", alpha=float(alpha), beta=float(beta), misspec=misspec)

    @classmethod
    def discrete(cls, values, misspec=None):
        return cls(kind="discrete", values=tuple(float(v) for v in values), misspec=misspec)

    @classmethod
    def point(cls, means, misspec=None):
        return cls(kind="point", means=tuple(float(v) for v in means), misspec=misspec)

    def without_misspec(self) -> "PriorSpec":
        """The belief a prior-based policy holds: same prior, no noise."""
        if self.misspec is None:
            return self
        return PriorSpec(self.kind, self.alpha, self.beta, self.low, self.high,
                         self.values, self.means, None)

    def as_beta(self):
        """Return ``(alpha, beta)`` when the prior is a Beta law, else None."""
        if self.kind == "uniform01":
            return 1.0, 1.0
        if self.kind == "beta":
            return self.alpha, self.beta
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "beta":
            d.update(alpha=self.alpha, beta=self.beta)
        elif self.kind == "uniform":
            d.update(low=self.low, high=self.high)
        elif self.kind == "discrete":
            d["values"] = list(self.values)
        elif self.kind == "point":
            d["means"] = list(self.means)
        if self.misspec is not None:
            d["misspec"] = {"mean": self.misspec.mean, "variance": self.misspec.variance}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        d = dict(d)
        kind = d.pop("kind", "uniform01")
        misspec = d.pop("misspec", None)
        noise = MisspecNoise(**misspec) if misspec else None
        if kind == "discrete":
            if "path" in d:
                values = load_discrete_values(d.pop("path"))
            elif d.get("values") == "bundled" or "values" not in d:
                values = bundled_effect_sizes()
            else:
                values = d["values"]
            return cls.discrete(values, misspec=noise)
        if kind == "point":
            return cls.point(d["means"], misspec=noise)
        if kind == "beta":
            return cls.beta_prior(d.get("alpha", 1.0), d.get("beta", 1.0), misspec=noise)
        if kind == "uniform":
            return cls.uniform(d.get("low", 0.0), d.get("high", 1.0), misspec=noise)
        if kind == "uniform01":
            return cls.uniform01(misspec=noise)
        raise ConfigError(f"unknown prior kind {kind!r}")


@dataclass(frozen=True)
class OutcomeModel:
    """Per-pull outcome law: Bernoulli(mean) or Normal(mean, sd)."""

    kind: str = "bernoulli"
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise ConfigError(f"unknown outcome model {self.kind!r}")
        if self.kind == "gaussian" and not (self.sd > 0 and math.isfinite(self.sd)):
            raise ConfigError(f"gaussian sd must be positive, got {self.sd}")

    @classmethod
    def bernoulli(cls):
        return cls("bernoulli")

    @classmethod
    def gaussian(cls, sd=1.0):
        return cls("gaussian", float(sd))

    @property
    def is_bernoulli(self) -> bool:
        return self.kind == "bernoulli"

    @property
    def subgaussian_scale(self) -> float:
        """Sub-Gaussian parameter of one centred outcome (1/2 for [0, 1] outcomes)."""
        return 0.5 if self.is_bernoulli else self.sd

    def check_means(self, means) -> None:
        means = np.asarray(means, dtype=float)
        if self.is_bernoulli and (np.any(means < 0) or np.any(means > 1)):
            raise DomainError("Bernoulli arm means must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"kind": self.kind} if self.is_bernoulli else {"kind": self.kind, "sd": self.sd}

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeModel":
        return cls(d.get("kind", "bernoulli"), float(d.get("sd", 1.0)))


def as_mean_vector(means) -> np.ndarray:
    """Validate and copy a mean vector (length >= 1, finite)."""
    arr = np.array(means, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ConfigError("mean vector must have at least one arm")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("mean vector entries must be finite")
    return arr


def draw_true_means(prior: PriorSpec, n: int, rng: np.random.Generator,
                    model: Optional[OutcomeModel] = None) -> np.ndarray:
    """Draw a length-``n`` mean vector from ``prior``.

    Misspecification noise, if configured, is added after the draw. Under a
    Bernoulli outcome model the perturbed means are clipped to [0, 1].
    """
    if n < 1:
        raise ConfigError(f"need at least one arm, got n={n}")
    if prior.kind == "uniform01":
        mu = rng.random(n)
    elif prior.kind == "uniform":
        mu = rng.uniform(prior.low, prior.high, n)
    elif prior.kind == "beta":
        mu = rng.beta(prior.alpha, prior.beta, n)
    elif prior.kind == "discrete":
        mu = rng.choice(np.asarray(prior.values, dtype=float), size=n)
    else:
        if len(prior.means) != n:
            raise ConfigError(f"point prior has {len(prior.means)} means but n={n}")
        mu = np.array(prior.means, dtype=float)

    if prior.misspec is not None:
        mu = mu + rng.normal(prior.misspec.mean, math.sqrt(prior.misspec.variance), n)
    if model is not None and model.is_bernoulli:
        mu = np.clip(mu, 0.0, 1.0)
    return mu


def sample_outcomes(means, size: int, model: OutcomeModel, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` outcomes for each entry of ``means``; shape ``(len(means), size)``."""
    means = np.asarray(means, dtype=float).reshape(-1)
    if model.is_bernoulli:
        model.check_means(means)
        return (rng.random((means.size, size)) < means[:, None]).astype(float)
    return means[:, None] + model.sd * rng.standard_normal((means.size, size))


def sample_outcome(mean: float, model: OutcomeModel, rng: np.random.Generator) -> float:
    """One outcome of an arm with the given mean."""
    return float(sample_outcomes([mean], 1, model, rng)[0, 0])


def load_discrete_values(path) -> list:
    """Read a one-column CSV of support values; a non-numeric first row is a header."""
    values = []
    with open(Path(path), newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue
                raise ConfigError(f"{path}: non-numeric value {row[0]!r} on line {i + 1}")
    if not values:
        raise ConfigError(f"{path}: no values found")
    return values


def bundled_effect_sizes() -> list:
    """Stand-in list of 75 standardized effect sizes shipped with the package."""
    ref = resources.files("certlab") / "data" / "effect_sizes.csv"
    with resources.as_file(ref) as p:
        return load_discrete_values(p)
