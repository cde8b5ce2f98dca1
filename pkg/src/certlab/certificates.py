"""High-probability lower bounds on arm means.

Every width in the package has the form ``sqrt(scale / m * log(num / delta))``
where ``m`` is the realised per-arm sample count and ``num`` is 1 or 2. The
named presets cover the forms used by the two-stage designs:

========== ====================================== =====================
name       width at k arms sharing ``s2`` pulls   used by
========== ====================================== =====================
eq3        sqrt(k / (2 s2) * log(2 / delta))      Bernoulli trials
prop1      sqrt(2 * log(1 / delta) * k / s2)      sample-split bound
omniscient sqrt(log(1 / delta) * k / (2 s2))      oracle choice of k
subgaussian sqrt(2 k / s2 * log(2 / delta))       unit-variance Normal
========== ====================================== =====================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from certlab.errors import ConfigError, DomainError, InfeasibleDesignError


@dataclass(frozen=True)
class BoundKind:
    family: str = "hoeffding_bounded"
    log_numerator: str = "two_over_delta"
    scale: float = 0.5
    name: str = "eq3"

    def __post_init__(self):
        if self.family not in ("hoeffding_bounded", "sub_gaussian"):
            raise ConfigError(f"unknown bound family {self.family!r}")
        if self.log_numerator not in ("two_over_delta", "one_over_delta"):
            raise ConfigError(f"unknown log numerator {self.log_numerator!r}")
        if not self.scale > 0:
            raise ConfigError(f"bound scale must be positive, got {self.scale}")

    @property
    def numerator(self) -> float:
        return 2.0 if self.log_numerator == "two_over_delta" else 1.0


EQ3 = BoundKind("hoeffding_bounded", "two_over_delta", 0.5, "eq3")
PROP1 = BoundKind("hoeffding_bounded", "one_over_delta", 2.0, "prop1")
OMNISCIENT = BoundKind("hoeffding_bounded", "one_over_delta", 0.5, "omniscient")
SUBGAUSSIAN = BoundKind("sub_gaussian", "two_over_delta", 2.0, "subgaussian")

PRESETS = {b.name: b for b in (EQ3, PROP1, OMNISCIENT, SUBGAUSSIAN)}


def bound_from_name(name: str) -> BoundKind:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown bound {name!r}; expected one of {sorted(PRESETS)}") from None


def _check_delta(delta):
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")


def width_for_count(m: int, delta: float, bound: BoundKind = EQ3) -> float:
    """Width of the bound for an arm observed ``m`` times."""
    _check_delta(delta)
    if m < 1:
        raise InfeasibleDesignError(f"need at least one sample per arm, got m={m}")
    return math.sqrt(bound.scale / m * math.log(bound.numerator / delta))


def half_width(k: int, s2: int, delta: float, bound: BoundKind = EQ3,
               bonferroni: bool = False) -> float:
    """Width when ``k`` retained arms split ``s2`` pulls uniformly.

    Uses the realised allocation ``m = s2 // k``. With ``bonferroni`` the
    confidence level is split across the ``k`` arms.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if s2 < k:
        raise InfeasibleDesignError(f"second-stage budget {s2} cannot give {k} arms one pull each")
    _check_delta(delta)
    d = delta / k if bonferroni else delta
    return width_for_count(s2 // k, d, bound)


def nominal_half_width(k: int, s2: int, delta: float, bound: BoundKind = EQ3) -> float:
    """Width at the fractional allocation ``s2 / k`` (no flooring)."""
    if k < 1 or s2 < 1:
        raise DomainError(f"need k >= 1 and s2 >= 1, got k={k}, s2={s2}")
    _check_delta(delta)
    return math.sqrt(bound.scale * k / s2 * math.log(bound.numerator / delta))


def certificate_value(emp_mean: float, k: int, s2: int, delta: float,
                      bound: BoundKind = EQ3, bonferroni: bool = False) -> float:
    return emp_mean - half_width(k, s2, delta, bound, bonferroni)


@dataclass(frozen=True)
class CertificateResult:
    """The deliverable of one trial: arm ``arm`` has mean at least ``l`` w.p. 1 - delta."""

    arm: int
    l: float
    k: int
    per_arm_samples: int
    delta: float

    def __post_init__(self):
        if self.k < 1 or self.per_arm_samples < 1:
            raise ConfigError("certificate needs k >= 1 and at least one sample per arm")
