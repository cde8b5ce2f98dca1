"""Pruning with a prior: posterior draws plus greedy set selection.

Arm means come from Beta(1, 4), so most arms are poor and a few are good.
After the first stage the Beta posterior is sampled 200 times and the
greedy rule picks the retained set; brute force over all subsets shows how
close greedy gets on the same draws.
"""

import numpy as np

from certlab.arm_model import OutcomeModel, PriorSpec, draw_true_means
from certlab.bayes import brute_force_select, greedy_prior_select, posterior_update, sample_posterior
from certlab.design import DesignSpec, run_uniform_stage

rng = np.random.default_rng(3)
prior = PriorSpec.beta_prior(1, 4)
design = DesignSpec.from_fraction(10, 2000, 0.3)
mu = draw_true_means(prior, 10, rng)
stage1 = run_uniform_stage(mu, np.arange(10), design.s1, OutcomeModel.bernoulli(), rng)

post = posterior_update(prior, stage1)
draws = sample_posterior(post, 200, rng)
greedy, scores = greedy_prior_select(draws, design.s2, design.delta, return_scores=True)
exact, best = brute_force_select(draws, design.s2, design.delta, return_score=True)

print("true means     ", np.round(mu, 3))
print("posterior means", np.round(post.mean(), 3))
print("greedy score by set size", np.round(scores, 4))
print(f"greedy keeps {sorted(greedy.tolist())} (score {scores.max():.4f})")
print(f"brute force keeps {sorted(exact.tolist())} (score {best:.4f})")
