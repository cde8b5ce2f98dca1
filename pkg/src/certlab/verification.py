"""Exact and Monte Carlo checks of the top-k and sample-splitting guarantees.

The exact checks work on tiny Bernoulli instances: with ``p`` first-stage
pulls per arm the first stage is summarised by a success-count profile in
``{0..p}^n`` and every policy is a map from profiles to arm sets, so the
objective ``E[max_{i in S} l_i]`` can be summed exactly.

Policy values come in two flavours. With ``exchangeable=False`` the mean
vector is attached to fixed arm labels; a policy may then simply keep the
arm that happens to carry the best mean, and no statement about top-k
policies can hold. With ``exchangeable=True`` (the default) the value is
averaged over every assignment of the means to the arm labels, i.e. the
policy does not know which arm is which. The top-k results are checked in
that setting.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy.stats import binom

from certlab.arm_model import OutcomeModel, PriorSpec, as_mean_vector, draw_true_means
from certlab.certificates import EQ3, PROP1, BoundKind, half_width
from certlab.design import DesignSpec, run_uniform_stage
from certlab.errors import DomainError, VerificationError
from certlab.policies import (PolicyKind, omniscient_k, sample_split_select, sort_by_empirical_mean,
                              top_k_select)
from certlab.trial_engine import run_trial

MAX_ENUM_ARMS = 3
MAX_ENUM_PULLS = 3
ENUM_SECOND_STAGE_LIMIT = 8
TOL = 1e-12


@dataclass(frozen=True)
class EnumInstance:
    means: tuple
    pulls_per_arm: int
    s2: int
    delta: float = 0.1
    bound: BoundKind = EQ3

    def __post_init__(self):
        mu = as_mean_vector(self.means)
        OutcomeModel.bernoulli().check_means(mu)
        if mu.size > MAX_ENUM_ARMS or not 1 <= self.pulls_per_arm <= MAX_ENUM_PULLS:
            raise VerificationError(
                f"instance too large to enumerate (n={mu.size}, pulls={self.pulls_per_arm})")
        if self.s2 < mu.size:
            raise VerificationError("second stage must give every arm a pull")
        object.__setattr__(self, "means", tuple(float(x) for x in mu))

    @property
    def n(self) -> int:
        return len(self.means)

    def profiles(self) -> list:
        return list(itertools.product(range(self.pulls_per_arm + 1), repeat=self.n))

    def relabeled(self, perm) -> "EnumInstance":
        return EnumInstance(tuple(self.means[p] for p in perm), self.pulls_per_arm, self.s2,
                            self.delta, self.bound)

    @classmethod
    def from_dict(cls, d: dict) -> "EnumInstance":
        from certlab.certificates import bound_from_name
        return cls(tuple(d["means"]), int(d["pulls_per_arm"]), int(d["s2"]),
                   float(d.get("delta", 0.1)), bound_from_name(d.get("bound", "eq3")))


@dataclass
class BoundReport:
    claim: str
    bound: float
    value: float
    margin: float
    verdict: str
    details: dict = field(default_factory=dict)

    @classmethod
    def make(cls, claim, bound, value, tolerance=0.0, **details) -> "BoundReport":
        margin = float(value - bound)
        return cls(claim, float(bound), float(value), margin,
                   "pass" if margin >= -tolerance else "fail", dict(details, tolerance=tolerance))

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- exact values

def expected_max_mean(means, m: int) -> float:
    """E[max_i Ybar_i] for independent Binomial(m, mu_i) / m, via products of CDFs."""
    grid = np.arange(m + 1)
    cdf = np.prod([binom.cdf(grid, m, mu) for mu in means], axis=0)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    return float(np.dot(grid / m, pmf))


def expected_max_mean_enum(means, m: int) -> float:
    """Same expectation by brute-force enumeration of all outcome tuples."""
    if m > ENUM_SECOND_STAGE_LIMIT:
        raise VerificationError(f"enumeration limited to m <= {ENUM_SECOND_STAGE_LIMIT}")
    pmfs = [binom.pmf(np.arange(m + 1), m, mu) for mu in means]
    total = 0.0
    for outcome in itertools.product(range(m + 1), repeat=len(means)):
        p = math.prod(pmfs[i][o] for i, o in enumerate(outcome))
        total += p * max(outcome) / m
    return total


def _binom_pmf(x: int, p: int, mu: float) -> float:
    return math.comb(p, x) * mu ** x * (1 - mu) ** (p - x)


def profile_probability(instance: EnumInstance, profile) -> float:
    p = instance.pulls_per_arm
    return math.prod(_binom_pmf(x, p, mu) for x, mu in zip(profile, instance.means))


def set_value(instance: EnumInstance, arms) -> float:
    """Exact E[max_{i in S} l_i] once ``S`` is fixed."""
    arms = sorted(arms)
    k = len(arms)
    m = instance.s2 // k
    return (expected_max_mean([instance.means[a] for a in arms], m)
            - half_width(k, instance.s2, instance.delta, instance.bound))


@functools.lru_cache(maxsize=256)
def _tables(instance: EnumInstance, exchangeable: bool):
    """Per relabeling: profile probabilities and the value of every arm set."""
    n = instance.n
    perms = list(itertools.permutations(range(n))) if exchangeable else [tuple(range(n))]
    subsets = [frozenset(a for a in range(n) if mask >> a & 1) for mask in range(1, 1 << n)]
    out = []
    for perm in perms:
        inst = instance.relabeled(perm)
        probs = {x: profile_probability(inst, x) for x in inst.profiles()}
        values = {s: set_value(inst, s) for s in subsets}
        out.append((probs, values))
    return out


def top_k_distribution(profile, k: int) -> dict:
    """Law of the top-k set for a profile when ties are broken uniformly at random."""
    n = len(profile)
    orders = [p for p in itertools.permutations(range(n))
              if all(profile[p[j]] >= profile[p[j + 1]] for j in range(n - 1))]
    dist = {}
    for p in orders:
        s = frozenset(p[:k])
        dist[s] = dist.get(s, 0.0) + 1.0 / len(orders)
    return dist


Policy = Union[Callable, Mapping]


def _as_distribution(choice) -> dict:
    if isinstance(choice, dict):
        return {frozenset(s): float(w) for s, w in choice.items()}
    return {frozenset(int(a) for a in choice): 1.0}


def exact_policy_value(instance: EnumInstance, policy: Policy, exchangeable: bool = True) -> float:
    """Exact objective of ``policy`` (a map or callable from profile to arm set).

    A policy entry may be an arm set or a dict ``{arm set: probability}``.
    With ``exchangeable`` the value is averaged over all relabelings of the
    arm means.
    """
    choices = {}
    for x in instance.profiles():
        choice = policy[x] if isinstance(policy, Mapping) else policy(x)
        dist = _as_distribution(choice)
        if any(not s for s in dist):
            raise VerificationError(f"policy retained no arms on profile {x}")
        choices[x] = dist
    tables = _tables(instance, exchangeable)
    total = 0.0
    for probs, values in tables:
        for x, dist in choices.items():
            total += probs[x] * sum(w * values[s] for s, w in dist.items())
    return total / len(tables)


def top_k_counterpart(instance: EnumInstance, policy: Policy) -> dict:
    """Top-k policy keeping, on every profile, as many arms as ``policy`` does."""
    out = {}
    for x in instance.profiles():
        choice = policy[x] if isinstance(policy, Mapping) else policy(x)
        dist = {}
        for s, w in _as_distribution(choice).items():
            for t, q in top_k_distribution(x, len(s)).items():
                dist[t] = dist.get(t, 0.0) + w * q
        out[x] = dist
    return out


def random_policy(instance: EnumInstance, rng: np.random.Generator) -> dict:
    """Uniformly random non-empty arm set on every profile."""
    n = instance.n
    policy = {}
    for x in instance.profiles():
        mask = int(rng.integers(1, 1 << n))
        policy[x] = frozenset(a for a in range(n) if mask >> a & 1)
    return policy


def random_instance(rng: np.random.Generator, n: int = 3, pulls: int = 2, s2: int = 30,
                    delta: float = 0.1) -> EnumInstance:
    return EnumInstance(tuple(np.round(rng.random(n), 3)), pulls, s2, delta)


def verify_lemma2(instance: EnumInstance, trials: int = 100, rng: Optional[np.random.Generator] = None,
                  exchangeable: bool = True, policies=None) -> BoundReport:
    """Top-k counterparts never lose to the policies they replace.

    Checks ``trials`` random policies (or the given ``policies``); the report
    holds the worst margin counterpart - original.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if policies is None:
        policies = [random_policy(instance, rng) for _ in range(trials)]
    worst, worst_pair, fails = math.inf, None, 0
    for pol in policies:
        orig = exact_policy_value(instance, pol, exchangeable)
        topk = exact_policy_value(instance, top_k_counterpart(instance, pol), exchangeable)
        if topk - orig < -TOL:
            fails += 1
        if topk - orig < worst:
            worst, worst_pair = topk - orig, (orig, topk)
    return BoundReport.make("lemma2_top_k_counterpart", worst_pair[0], worst_pair[1], TOL,
                            means=list(instance.means), policies=len(policies), violations=fails,
                            exchangeable=exchangeable)


def _profile_value_table(instance, choices, exchangeable):
    """values[x][c]: probability-weighted value of choice c on profile x."""
    tables = _tables(instance, exchangeable)
    profiles = instance.profiles()
    table = np.zeros((len(profiles), len(choices)))
    for probs, values in tables:
        for xi, x in enumerate(profiles):
            for ci, c in enumerate(choices):
                table[xi, ci] += probs[x] * sum(w * values[s] for s, w in c(x).items())
    return table / len(tables)


def _enumerate_best(table) -> float:
    """Exhaustive max over all maps profile -> choice of the summed table entries."""
    # partial[j] = value of the j-th choice sequence over the rows seen so far
    partial = np.zeros(1)
    for row in table:
        partial = (partial[:, None] + row[None, :]).reshape(-1)
    return float(partial.max())


def verify_theorem1(instance: EnumInstance, exchangeable: bool = True) -> BoundReport:
    """Best value over all policies equals the best value over top-k policies.

    Enumerates every map from profiles to non-empty arm sets, and every
    profile-dependent choice of k.
    """
    n = instance.n
    n_profiles = len(instance.profiles())
    if n > 2 or instance.pulls_per_arm > 2:
        raise VerificationError("exhaustive policy enumeration is limited to n <= 2, pulls <= 2")
    subsets = [frozenset(a for a in range(n) if mask >> a & 1) for mask in range(1, 1 << n)]
    any_choices = [lambda x, s=s: {s: 1.0} for s in subsets]
    topk_choices = [lambda x, k=k: top_k_distribution(x, k) for k in range(1, n + 1)]
    best_any = _enumerate_best(_profile_value_table(instance, any_choices, exchangeable))
    best_topk = _enumerate_best(_profile_value_table(instance, topk_choices, exchangeable))
    rep = BoundReport.make("theorem1_top_k_optimal", best_any, best_topk, TOL,
                           means=list(instance.means), pulls_per_arm=instance.pulls_per_arm,
                           policies_enumerated=len(subsets) ** n_profiles,
                           top_k_policies_enumerated=n ** n_profiles, exchangeable=exchangeable)
    # equality, not just >=: the top-k class is a subset of all policies
    if best_topk - best_any > TOL:
        rep.verdict = "fail"
    return rep


# ---------------------------------------------------------------- rank dominance

def lemma1_exact(instance: EnumInstance) -> np.ndarray:
    """Exact ``probs[i, a] = P(arm a is ranked i-th)`` after the first stage."""
    n = instance.n
    mu = np.array(instance.means)
    probs = np.zeros((n, n))
    for x in instance.profiles():
        px = profile_probability(instance, x)
        orders = [p for p in itertools.permutations(range(n))
                  if all(x[p[j]] >= x[p[j + 1]] for j in range(n - 1))]
        for p in orders:
            for pos, arm in enumerate(p):
                probs[pos, arm] += px / len(orders)
    return probs


def rank_tail_probabilities(probs_by_arm: np.ndarray, means, thresholds) -> np.ndarray:
    """``out[i, t] = P(mu_{sigma_i} >= thresholds[t])`` from position-by-arm probabilities."""
    means = np.asarray(means, dtype=float)
    ge = means[None, :] >= np.asarray(thresholds, dtype=float)[:, None]
    return probs_by_arm @ ge.T


def lemma1_monte_carlo(means, pulls_per_arm: int, replications: int,
                       rng: np.random.Generator, thresholds=None):
    """Monte Carlo rank-position tail probabilities and their standard errors."""
    means = as_mean_vector(means)
    thresholds = np.round(np.arange(0.1, 1.0, 0.1), 10) if thresholds is None else np.asarray(thresholds)
    n = means.size
    successes = rng.binomial(pulls_per_arm, means, size=(replications, n))
    # integer counts plus a U[0,1) tiebreak sorts exactly like (mean, tiebreak)
    key = successes + rng.random((replications, n))
    order = np.argsort(-key, axis=1)
    ranked_mu = means[order]
    hits = ranked_mu[:, :, None] >= thresholds[None, None, :]
    p = hits.mean(axis=0)
    se = np.sqrt(p * (1 - p) / replications)
    return p, se, thresholds


def verify_lemma1(means, pulls_per_arm: int = 2, replications: int = 100_000,
                  rng: Optional[np.random.Generator] = None, z: float = 3.0) -> BoundReport:
    rng = rng if rng is not None else np.random.default_rng(0)
    p, se, thresholds = lemma1_monte_carlo(means, pulls_per_arm, replications, rng)
    n = p.shape[0]
    worst = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            slack = p[i] - (p[j] - z * np.sqrt(se[i] ** 2 + se[j] ** 2))
            worst = min(worst, float(slack.min()))
    return BoundReport.make("lemma1_rank_dominance", 0.0, worst, 0.0, means=list(map(float, means)),
                            replications=replications, thresholds=thresholds.tolist())


# ---------------------------------------------------------------- sample-split lower bound

def prop1_width(i, s2: int, delta: float) -> float:
    return math.sqrt(2 * math.log(1 / delta) * i / s2)


def proposition1_terms(mu_sorted, s1: int, s2: int, n: int, delta: float, k_star: int):
    """The two penalty sums subtracted from the optimal value, as printed.

    ``mu_sorted`` are the true means read along the empirical ordering.
    Returns ``(first_sum, second_sum)``.
    """
    mu = np.asarray(mu_sorted, dtype=float)
    if not 1 <= k_star <= mu.size:
        raise DomainError(f"k_star must lie in [1, {mu.size}], got {k_star}")
    c = lambda i: prop1_width(i, s2, delta)
    gap = lambda i, j: mu[i - 1] - mu[j - 1]
    first = 0.0
    for i in range(1, k_star + 1):
        b = gap(k_star, i) - (c(k_star) - c(i))
        first += math.exp(-b * b * s1 / n) * b
    second = 0.0
    for i in range(k_star + 1, mu.size + 1):
        b = gap(k_star, i) - (c(k_star) - c(i))
        second += math.exp(-gap(i, k_star) ** 2 * s1 / n) * b
    return first, second


def proposition1_bound(mu_sorted, s1: int, s2: int, n: int, delta: float, k_star: int,
                       f_star: float) -> float:
    first, second = proposition1_terms(mu_sorted, s1, s2, n, delta, k_star)
    return f_star - first - second


def check_proposition1(means, s1: int, s2: int, delta: float, replications: int,
                       rng: np.random.Generator, z: float = 3.0) -> BoundReport:
    """Paired Monte Carlo check of the sample-splitting lower bound.

    Per replication one first stage is drawn; the sample-split policy and
    the oracle top-k* policy (k* from true means along the empirical order,
    width ``prop1``) each run their own second stage, and the penalty sums
    are evaluated at that order and k*. Averaging the conditional bound over
    first stages gives the unconditional one.
    """
    means = as_mean_vector(means)
    n = means.size
    model = OutcomeModel.bernoulli()
    design = DesignSpec(n=n, T=s1 + s2, s1=s1, delta=delta, bound=PROP1)
    ss_vals = np.empty(replications)
    omni_vals = np.empty(replications)
    penalties = np.empty(replications)
    for r in range(replications):
        stage1 = run_uniform_stage(means, np.arange(n), s1, model, rng)
        ranked = sort_by_empirical_mean(stage1, rng)
        k_star, _ = omniscient_k(ranked, means, s2, delta, PROP1)
        first, second = proposition1_terms(means[ranked.order], s1, s2, n, delta, k_star)
        penalties[r] = first + second

        for arms, out in ((top_k_select(ranked, k_star), omni_vals),
                          (sample_split_select(stage1, design, rng), ss_vals)):
            stage2 = run_uniform_stage(means, arms, s2, model, rng, keep_samples=False)
            emp = stage2.sums[arms] / stage2.counts[arms]
            out[r] = emp.max() - half_width(arms.size, s2, delta, PROP1)

    diff = ss_vals - (omni_vals - penalties)
    se = diff.std(ddof=1) / math.sqrt(replications)
    f_ss = ss_vals.mean()
    bound = omni_vals.mean() - penalties.mean()
    return BoundReport.make("proposition1_sample_split", bound, f_ss, z * se,
                            f_star=float(omni_vals.mean()), mean_penalty=float(penalties.mean()),
                            se_paired=float(se), replications=replications,
                            means=means.tolist(), s1=s1, s2=s2, delta=delta)


# ---------------------------------------------------------------- coverage

def empirical_coverage(design: DesignSpec, policy, means, model: OutcomeModel, replications: int,
                       rng: np.random.Generator) -> float:
    """Fraction of trials whose certificate lies below the certified arm's true mean.

    ``means`` is a fixed vector or a PriorSpec redrawn every replication.
    """
    if replications < 1:
        raise DomainError("need at least one replication")
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    covered = 0
    for _ in range(replications):
        mu = draw_true_means(means, design.n, rng, model) if isinstance(means, PriorSpec) else means
        covered += run_trial(design, policy, mu, model, rng).covered
    return covered / replications


def coverage_report(design, policy, means, model, replications, rng, z=3.0) -> BoundReport:
    cov = empirical_coverage(design, policy, means, model, replications, rng)
    target = 1 - design.delta
    return BoundReport.make("certificate_coverage", target, cov,
                            z * math.sqrt(design.delta * (1 - design.delta) / replications),
                            replications=replications)


# ---------------------------------------------------------------- suite

def default_reports(rng: Optional[np.random.Generator] = None, quick: bool = True) -> list:
    """A compact battery of every check, used by the ``verify`` command."""
    rng = rng if rng is not None else np.random.default_rng(2024)
    reports = []
    for _ in range(3 if quick else 20):
        reports.append(verify_lemma2(random_instance(rng), trials=20 if quick else 100, rng=rng))
    for mu, pulls in (((0.9, 0.1), 1), ((0.5, 0.5), 2), ((0.7, 0.4), 2)):
        reports.append(verify_theorem1(EnumInstance(mu, pulls, 20)))
    reports.append(verify_lemma1((0.3, 0.5, 0.7), 2, 20_000 if quick else 100_000, rng))
    mu = draw_true_means(PriorSpec.uniform01(), 10, rng)
    reports.append(check_proposition1(mu, 5000, 5000, 0.1, 200 if quick else 2000, rng))
    design = DesignSpec.from_fraction(10, 10_000, 0.3)
    reports.append(coverage_report(design, "sample_split", PriorSpec.uniform01(),
                                   OutcomeModel.bernoulli(), 1000 if quick else 10_000, rng))
    return reports


def instance_reports(instance: EnumInstance, rng: Optional[np.random.Generator] = None) -> list:
    rng = rng if rng is not None else np.random.default_rng(0)
    reports = [verify_lemma2(instance, 100, rng)]
    if instance.n <= 2 and instance.pulls_per_arm <= 2:
        reports.append(verify_theorem1(instance))
    return reports
