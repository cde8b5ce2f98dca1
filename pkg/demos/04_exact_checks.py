"""Exact checks of the top-k results on tiny instances.

With one or two first-stage pulls per arm every policy is a finite table,
so values can be summed exactly. When the policy knows which arm carries
which mean, a constant rule beats every top-k rule; once the value is
averaged over relabelings the best policy is a top-k policy.
"""

import numpy as np

from certlab.verification import EnumInstance, random_instance, verify_lemma2, verify_theorem1

inst = EnumInstance((0.9, 0.1), pulls_per_arm=1, s2=100)
for exchangeable in (False, True):
    rep = verify_theorem1(inst, exchangeable=exchangeable)
    label = "averaged over labels" if exchangeable else "fixed labels        "
    print(f"{label}: best policy {rep.bound:.5f}, best top-k {rep.value:.5f} -> {rep.verdict}")

rng = np.random.default_rng(0)
inst = random_instance(rng)
rep = verify_lemma2(inst, trials=100, rng=rng)
print(f"100 random policies on means {inst.means}: worst gain of the top-k counterpart "
      f"{rep.margin:.2e} ({rep.details['violations']} violations)")
