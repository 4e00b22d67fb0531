#!/usr/bin/env python3
"""Compute the viability kernel and viable set of the hovership benchmark.

The hovership is a 1-D altitude-control toy: thrust fights gravity and a
saturating drag, the action is held for one second at a time, and leaving
the altitude box [0, 2] is failure.  In continuous time every altitude is
recoverable, but the one-second hold makes low-altitude/low-thrust pairs
unrecoverable: they cross the floor before the hold expires.

Running this script tabulates the discrete transitions on a fine grid,
iterates the viability fixed point, and writes the resulting sets next to
this file.  If matplotlib is importable it also renders the viable set.
"""

import os

import numpy as np

import viakit as vk

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

model = vk.hovership_model()
grid = vk.GridSpec.from_boxes(model.state_box, model.action_box, 201, 161)

print(f"model: {model.name}, hold {model.hold_duration}s, substep {model.substep}s")
print(f"grid: {grid.state_count} state cells x {grid.action_count} action cells")

result = vk.compute_viability(model, grid)
total = grid.state_count * grid.action_count
print(f"fixed point converged after {result.iterations} sweep(s)")
print(f"kernel: {result.kernel.count()} / {grid.state_count} state cells")
print(f"viable set: {result.viable.count()} / {total} state-action cells")

unviable = vk.QSet.full(grid).difference(result.viable)
cells = np.argwhere(unviable.members)
sv, av = grid.state_values(), grid.action_values()
print(f"unviable pairs: {unviable.count()}, spanning "
      f"s in [{sv[cells[:, 0].min()][0]:.2f}, {sv[cells[:, 0].max()][0]:.2f}], "
      f"a in [{av[cells[:, 1].min()][0]:.3f}, {av[cells[:, 1].max()][0]:.3f}]")
print("only low thrust at low altitude fails: max thrust recovers from anywhere")

vk.save_set(os.path.join(OUT, "q_viable.json"), result.viable,
            metadata={"model": model.name, "iterations": result.iterations})
vk.save_set(os.path.join(OUT, "s_kernel.json"), result.kernel,
            metadata={"model": model.name, "iterations": result.iterations})
vk.write_cells_csv(os.path.join(OUT, "q_viable.csv"), result.viable)
print(f"wrote q_viable.json / s_kernel.json / q_viable.csv to {OUT}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not available; skipping the plot")
else:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.imshow(result.viable.members.T, origin="lower", aspect="auto",
              extent=[0.0, 2.0, 0.0, 0.8], cmap="Greens", vmin=-0.3, vmax=1.2)
    ax.set_xlabel("altitude s")
    ax.set_ylabel("thrust a")
    ax.set_title("viable set (green) and the unviable low-altitude wedge")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "viable_set.png"), dpi=130)
    print("wrote viable_set.png")
