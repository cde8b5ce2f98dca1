"""Posterior sampling and greedy selection of the retained arm set.

Given ``d`` posterior draws of the mean vector (rows of a ``d x n`` matrix),
the value of retaining set ``B`` is estimated by

    g(B) = mean over draws of max_{a in B} draw[a]

which is monotone submodular in ``B``. For each cardinality ``i`` the greedy
pass grows ``B^i`` from ``B^{i-1}``; the returned set maximises
``g(B^i) - width(i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, xlogy

from certlab.arm_model import OutcomeModel, PriorSpec
from certlab.certificates import EQ3, BoundKind, half_width
from certlab.design import DesignSpec, StageData
from certlab.errors import ConfigError, DomainError

UNIFORM_GRID = 512
MAX_BRUTE_FORCE_ARMS = 20


@dataclass
class Posterior:
    """Independent per-arm posterior over the arm means.

    ``beta``: per-arm ``alpha``/``beta`` arrays. ``discrete``: a shared
    ``support`` vector with per-arm ``weights`` (rows sum to one).
    ``point``: a fixed mean vector.
    """

    kind: str
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    support: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    point: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "beta":
            if np.any(self.alpha <= 0) or np.any(self.beta <= 0):
                raise ConfigError("beta posterior parameters must be positive")
        elif self.kind == "discrete":
            if not np.allclose(self.weights.sum(axis=1), 1.0, rtol=0, atol=1e-12):
                raise ConfigError("discrete posterior weights must sum to one per arm")
        elif self.kind != "point":
            raise ConfigError(f"unknown posterior kind {self.kind!r}")

    @property
    def n(self) -> int:
        if self.kind == "beta":
            return self.alpha.size
        if self.kind == "discrete":
            return self.weights.shape[0]
        return self.point.size

    def mean(self) -> np.ndarray:
        if self.kind == "beta":
            return self.alpha / (self.alpha + self.beta)
        if self.kind == "discrete":
            return self.weights @ self.support
        return self.point.copy()


def _discrete_log_likelihood(support, data: StageData, model: OutcomeModel):
    counts = data.counts[:, None].astype(float)
    sums = data.sums[:, None]
    v = support[None, :]
    if model.is_bernoulli:
        if np.any(support < 0) or np.any(support > 1):
            raise ConfigError("Bernoulli outcomes need discrete support inside [0, 1]")
        return xlogy(sums, v) + xlogy(counts - sums, 1 - v)
    # Gaussian: sum_t -(x_t - v)^2 / (2 sd^2), dropping terms free of v
    return (2 * v * sums - counts * v ** 2) / (2 * model.sd ** 2)


def posterior_update(prior: PriorSpec, data: StageData,
                     model: Optional[OutcomeModel] = None) -> Posterior:
    """Condition an i.i.d. prior on per-arm first-stage statistics."""
    model = model or OutcomeModel.bernoulli()
    n = data.n
    if prior.kind == "point":
        if len(prior.means) != n:
            raise ConfigError(f"point prior has {len(prior.means)} means but data has {n} arms")
        return Posterior("point", point=np.array(prior.means, dtype=float))

    ab = prior.as_beta()
    if ab is not None:
        if not model.is_bernoulli:
            raise ConfigError("a Beta prior is only supported with Bernoulli outcomes")
        a, b = ab
        return Posterior("beta", alpha=a + data.sums, beta=b + data.counts - data.sums)

    if prior.kind == "uniform":
        # no conjugate form: discretise onto cell midpoints
        edges = np.linspace(prior.low, prior.high, UNIFORM_GRID + 1)
        support = 0.5 * (edges[:-1] + edges[1:])
    else:
        support = np.asarray(prior.values, dtype=float)
    logw = np.tile(-np.log(support.size), (n, support.size))
    logw = logw + _discrete_log_likelihood(support, data, model)
    weights = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    return Posterior("discrete", support=support, weights=weights)


def sample_posterior(post: Posterior, d: int, rng: np.random.Generator) -> np.ndarray:
    """``d`` independent mean-vector draws, as a ``d x n`` matrix."""
    if d < 1:
        raise DomainError(f"need at least one posterior draw, got d={d}")
    if post.kind == "beta":
        return rng.beta(post.alpha, post.beta, size=(d, post.n))
    if post.kind == "point":
        return np.tile(post.point, (d, 1))
    u = rng.random((d, post.n))
    cdf = np.cumsum(post.weights, axis=1)
    out = np.empty((d, post.n))
    for a in range(post.n):
        idx = np.searchsorted(cdf[a], u[:, a] * cdf[a, -1], side="right")
        out[:, a] = post.support[np.minimum(idx, post.support.size - 1)]
    return out


def set_value(draws, arms) -> float:
    """g(B): average over draws of the best retained arm."""
    draws = np.asarray(draws, dtype=float)
    return float(draws[:, list(arms)].max(axis=1).mean())


def greedy_chain(draws) -> tuple:
    """Nested greedy sets for cardinalities 1..n.

    Returns ``(order, values)``: ``B^i`` is ``order[:i]`` and ``values[i-1]``
    is ``g(B^i)``. O(n^2 d).
    """
    draws = np.asarray(draws, dtype=float)
    d, n = draws.shape
    best = np.full(d, -np.inf)
    free = np.ones(n, dtype=bool)
    order, values = [], []
    for _ in range(n):
        gains = np.maximum(best[:, None], draws).mean(axis=0)
        gains[~free] = -np.inf
        a = int(np.argmax(gains))
        order.append(a)
        values.append(float(gains[a]))
        free[a] = False
        best = np.maximum(best, draws[:, a])
    return np.array(order), np.array(values)


def _empirical_noise(draws, m, model, rng):
    """Replace each drawn mean by an empirical mean of ``m`` simulated pulls."""
    if model.is_bernoulli:
        return rng.binomial(m, np.clip(draws, 0, 1)) / m
    return draws + model.sd / np.sqrt(m) * rng.standard_normal(draws.shape)


def greedy_prior_select(draws, s2: int, delta: float, bound: BoundKind = EQ3,
                        noise_model: Optional[OutcomeModel] = None,
                        rng: Optional[np.random.Generator] = None,
                        return_scores: bool = False):
    """Best of the greedy sets ``B^1..B^n`` scored by ``g(B^i) - width(i)``.

    With ``noise_model`` each cardinality is scored on draws perturbed into
    simulated second-stage empirical means at ``s2 // i`` pulls per arm; the
    greedy sets are then built per cardinality and are no longer nested.
    """
    draws = np.asarray(draws, dtype=float)
    d, n = draws.shape
    kmax = min(n, s2)
    widths = np.array([half_width(i, s2, delta, bound) for i in range(1, kmax + 1)])
    if noise_model is None:
        order, values = greedy_chain(draws)
        scores = values[:kmax] - widths
        k = int(np.argmax(scores)) + 1
        arms = order[:k]
    else:
        if rng is None:
            raise ConfigError("simulated second-stage noise needs an rng")
        sets, scores = [], np.empty(kmax)
        for i in range(1, kmax + 1):
            noisy = _empirical_noise(draws, s2 // i, noise_model, rng)
            order, values = greedy_chain(noisy)
            sets.append(order[:i])
            scores[i - 1] = values[i - 1] - widths[i - 1]
        arms = sets[int(np.argmax(scores))]
    if return_scores:
        return arms, scores
    return arms


def _subset_maxima(cols):
    """Per-draw maxima over every subset of the columns, indexed by bitmask."""
    d, m = cols.shape
    best = np.empty((1 << m, d))
    best[0] = -np.inf
    sizes = np.zeros(1 << m, dtype=np.int64)
    for mask in range(1, 1 << m):
        low = mask & -mask
        best[mask] = np.maximum(best[mask ^ low], cols[:, low.bit_length() - 1])
        sizes[mask] = sizes[mask ^ low] + 1
    return best, sizes


def brute_force_select(draws, s2: int, delta: float, bound: BoundKind = EQ3,
                       return_score: bool = False):
    """Exact maximiser of ``g(B) - width(|B|)`` over all non-empty subsets.

    Ties go to the smaller set.
    """
    draws = np.asarray(draws, dtype=float)
    d, n = draws.shape
    if n > MAX_BRUTE_FORCE_ARMS:
        raise DomainError(f"brute force over 2^{n} subsets refused (limit n <= {MAX_BRUTE_FORCE_ARMS})")
    kmax = min(n, s2)
    widths = np.array([half_width(i, s2, delta, bound) for i in range(1, kmax + 1)])

    lo_n = min(n, 10)
    best_lo, size_lo = _subset_maxima(draws[:, :lo_n])
    best_hi, size_hi = _subset_maxima(draws[:, lo_n:])

    top, pick, pick_size = -np.inf, 0, n + 1
    for h in range(best_hi.shape[0]):
        g = np.maximum(best_lo, best_hi[h]).mean(axis=1)
        size = size_lo + size_hi[h]
        ok = (size >= 1) & (size <= kmax)
        scores = np.full(g.size, -np.inf)
        scores[ok] = g[ok] - widths[size[ok] - 1]
        j = int(np.argmax(scores))
        # among equal scores prefer the smaller set
        tied = np.flatnonzero(scores == scores[j])
        j = int(tied[np.argmin(size[tied])])
        if scores[j] > top or (scores[j] == top and size[j] < pick_size):
            top, pick, pick_size = float(scores[j]), j | (h << lo_n), int(size[j])
    arms = np.array([a for a in range(n) if pick >> a & 1])
    if return_score:
        return arms, float(top)
    return arms


def greedy_prior_policy(policy, stage1: StageData, design: DesignSpec,
                        model: OutcomeModel, rng: np.random.Generator) -> np.ndarray:
    """Policy adapter: posterior from the (noise-free) prior, then greedy selection."""
    if policy.prior is None:
        raise ConfigError("greedy_prior policy needs a prior")
    post = posterior_update(policy.prior.without_misspec(), stage1, model)
    draws = sample_posterior(post, policy.posterior_draws, rng)
    noise = model if policy.simulate_noise else None
    return greedy_prior_select(draws, design.s2, design.delta, design.bound,
                               noise_model=noise, rng=rng)
