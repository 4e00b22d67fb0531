#!/usr/bin/env python3
"""Learn a constraint for the affine nominal policy by greedy exploration.

The learner never sees the model: it regresses survived/failed labels with
a Gaussian process seeded near one operating point, and each step executes
the estimate's feasible action closest to the nominal one.  Exploration is
purely on-policy; the estimate only needs to become accurate where the
constrained policy actually operates, so the final set can underestimate
the viable set substantially while the policy it induces is exact.
"""

import os

import viakit as vk
from viakit.cli import cmd_evaluate, cmd_learn

HERE = os.path.dirname(__file__)
OUT = os.path.join(HERE, "output", "affine_run")

config = vk.load_config(os.path.join(HERE, "..", "configs", "hovership_affine.json"))
exp = config.experiment
print(f"running {exp.batch_count} batches x {exp.episodes_per_batch} episodes "
      f"x <= {exp.max_steps_per_episode} steps, seed {exp.seed}")

metrics = cmd_learn(config, OUT)
print(f"samples collected: {metrics['sample_count']}")
print(f"failures during training: {metrics['failure_count']}")
print(f"policy deviation vs the true optimum: mean {metrics['deviation_mean_pct']:.2f}%, "
      f"max {metrics['deviation_max_pct']:.2f}% of the action range")
print(f"estimate covers {metrics['khat_cells']} cells; "
      f"misses {metrics['underestimate_pct']:.1f}% of the viable set; "
      f"overlaps {metrics['overreach_pct']:.2f}% of the critical set")

report = cmd_evaluate(OUT, config)
print(f"final estimate admissible: {report['admissible']}")
if report["admissible"]:
    print("admissible, so the constrained policy is exactly optimal "
          f"(greedy sufficiency check: {report['greedy_sufficiency_ok']})")
print(f"run artifacts in {OUT}: run.json, samples.csv, khat_*.json, episodes/")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np
except ImportError:
    print("matplotlib not available; skipping the plot")
else:
    khat0 = vk.load_set(os.path.join(OUT, "khat_initial.json"))
    khat1 = vk.load_set(os.path.join(OUT, "khat_final.json"))
    stored = vk.load_run(OUT)
    fig, ax = plt.subplots(figsize=(7, 4))
    shade = khat0.members.astype(float) + khat1.members
    ax.imshow(shade.T, origin="lower", aspect="auto", extent=[0, 2, 0, 0.8],
              cmap="Blues", vmin=0, vmax=2.5)
    ss = [s.state[0] for s in stored.steps]
    aa = [s.action[0] for s in stored.steps]
    ok = [s.label > 0 for s in stored.steps]
    ax.scatter([s for s, k in zip(ss, ok) if k], [a for a, k in zip(aa, ok) if k],
               s=6, c="green", label="survived")
    ax.scatter([s for s, k in zip(ss, ok) if not k], [a for a, k in zip(aa, ok) if not k],
               s=14, c="red", marker="x", label="failed")
    sgrid = np.linspace(0, 2, 100)
    ax.plot(sgrid, 0.7 - 0.3 * sgrid, "r-", lw=1, label="nominal policy")
    ax.set_xlabel("altitude s")
    ax.set_ylabel("thrust a")
    ax.set_title("constraint estimate: seed region (light) to final (dark)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "output", "affine_learning.png"), dpi=130)
    print("wrote affine_learning.png")
