"""Walk through a single two-stage trial by hand.

Ten arms with uniform(0, 1) success rates share a budget of 10,000 pulls.
30% of the budget is spread evenly in the first stage; the sample-splitting
rule then decides how many of the leading arms to keep, and the rest of the
budget is spread evenly over the survivors.
"""

import numpy as np

from certlab.arm_model import OutcomeModel, PriorSpec, draw_true_means
from certlab.design import DesignSpec, run_uniform_stage, certify_uniform
from certlab.policies import sample_split_select

rng = np.random.default_rng(7)
model = OutcomeModel.bernoulli()
design = DesignSpec.from_fraction(n=10, T=10_000, s1_fraction=0.3, delta=0.1)
mu = draw_true_means(PriorSpec.uniform01(), design.n, rng)
print("true means      ", np.round(mu, 3))

stage1 = run_uniform_stage(mu, np.arange(design.n), design.s1, model, rng)
print("first-stage est.", np.round(stage1.means(), 3))

kept = sample_split_select(stage1, design, rng)
print(f"kept arms {kept.tolist()} -> {design.s2 // kept.size} pulls each in stage two")

stage2 = run_uniform_stage(mu, kept, design.s2, model, rng, keep_samples=False)
cert = certify_uniform(stage2, kept, design.s2, design.delta, design.bound)
print(f"certified arm {cert.arm}: mean is at least {cert.l:.4f} with prob. >= {1 - design.delta}")
print(f"its true mean is {mu[cert.arm]:.4f}; best arm overall {mu.max():.4f}")

# the same budget spent in one uniform stage
single = run_uniform_stage(mu, np.arange(design.n), design.T, model, rng, keep_samples=False)
one = certify_uniform(single, np.arange(design.n), design.T, design.delta, design.bound)
print(f"single-stage certificate for comparison: {one.l:.4f}")
