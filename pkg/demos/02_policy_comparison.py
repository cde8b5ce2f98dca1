"""Replicated comparison of pruning rules across first-stage sizes.

A reduced version of the fig1 preset (5 seeds x 30 runs) so it finishes in
a few seconds. Numbers are mean normalized certificates (certificate over
the best true mean) with standard errors.
"""

import dataclasses

from certlab import harness

cfg = dataclasses.replace(harness.figure_presets()["fig1"][0], seeds=5, runs_per_seed=30,
                          sweep_values=[0.1, 0.3, 0.5, 0.7])
rows = harness.run_experiment(cfg)

policies = cfg.policies
print("s1/T  " + "".join(f"{p:>15s}" for p in policies))
for v in cfg.sweep_values:
    cells = {r.policy: r for r in rows if r.sweep_value == v}
    print(f"{v:4.1f}  " + "".join(f"{cells[p].mean_norm_cert:9.4f}±{cells[p].std_err:.3f}"
                                  for p in policies))
