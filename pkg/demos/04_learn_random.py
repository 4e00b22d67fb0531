#!/usr/bin/env python3
"""Learn under a uniformly random nominal policy and compare the estimates.

With a random nominal every action can be proposed anywhere, so every
unviable pair at a viable state is critical and the constrained policy
keeps pushing the estimate outwards.  The estimate therefore grows toward
the whole viable set, unlike the affine run, where a narrow tube around the
nominal line is already enough for an exact policy.
"""

import os

import viakit as vk
from viakit.cli import cmd_learn

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "output", "uniform_run")

config = vk.load_config(os.path.join(HERE, "..", "configs", "hovership_uniform.json"))
metrics = cmd_learn(config, OUT)

print(f"samples collected: {metrics['sample_count']}")
print(f"failures during training: {metrics['failure_count']}")
print(f"estimate covers {metrics['khat_cells']} of {metrics['viable_cells']} viable cells; "
      f"underestimate {metrics['underestimate_pct']:.2f}%")
print("(deviation metrics are undefined for a stochastic nominal; coverage "
      "of the viable set plays their role)")

affine_dir = os.path.join(HERE, "output", "affine_run")
if os.path.isdir(affine_dir):
    affine_khat = vk.load_set(os.path.join(affine_dir, "khat_final.json"))
    mine = vk.load_set(os.path.join(OUT, "khat_final.json"))
    print(f"final estimate: {mine.count()} cells vs {affine_khat.count()} for the "
          f"affine run — the random nominal needs (and learns) much more of the "
          f"viable set")
else:
    print("run 03_learn_affine.py first to compare the two estimates")
