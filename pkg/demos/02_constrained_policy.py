#!/usr/bin/env python3
"""Constrained controllers, the critical set, and admissibility.

Constraining a nominal policy means executing, at each state, the feasible
action of a given state-action set closest to the nominal action.  The key
object is the critical set: unviable pairs, at viable states, that cost no
more than the constrained optimum.  A constraint set reproduces the optimal
policy exactly when it contains the optimal-action graph and misses the
critical set; nothing else about it has to be accurate.

The hovership's affine nominal policy is viable everywhere, so its critical
set is empty.  To show a nontrivial one, this script also builds a sloppy
nominal policy that dives at low altitude.
"""

import numpy as np

import viakit as vk

model = vk.hovership_model()
grid = vk.GridSpec.from_boxes(model.state_box, model.action_box, 201, 161)
oracle = vk.compute_viability(model, grid)

# -- the benchmark's affine nominal: a = 0.7 - 0.3 s ---------------------------
affine = vk.AffinePolicy([[-0.3]], [0.7], model.action_box)
crit = vk.critical_set(oracle, affine)
print(f"affine nominal: critical set has {crit.count()} cells "
      "(the nominal is viable at every state, so nothing needs excluding)")

opt_table = vk.optimal_policy(oracle.viable, affine)
sv, av = grid.state_values(), grid.action_values()
mismatch = sum(1 for i, j in opt_table.items()
               if abs(av[j][0] - affine.nominal_action(sv[i])[0]) > 0.0051)
print(f"constrained optimum deviates from the nominal on {mismatch} of "
      f"{len(opt_table)} kernel cells")

# -- a nominal policy that dives: a = 0 below s = 0.5 ---------------------------
dive_actions = np.where(sv[:, [0]] < 0.5, 0.0, 0.4)
dive = vk.TablePolicy(grid, dive_actions)
crit_dive = vk.critical_set(oracle, dive)
print(f"\ndiving nominal: critical set has {crit_dive.count()} cells")
cells = np.argwhere(crit_dive.members)
print(f"  they sit at s in [{sv[cells[:, 0].min()][0]:.2f}, "
      f"{sv[cells[:, 0].max()][0]:.2f}], a <= {av[cells[:, 1].max()][0]:.3f}")

# the viable set itself is always admissible
verdict = vk.is_admissible(oracle.viable, oracle, dive)
print(f"viable set admissible for the diving nominal: {verdict.admissible}")

# adding one critical cell breaks admissibility and the policy match together
bad_cell = tuple(map(int, cells[0]))
spoiled = oracle.viable.union(vk.QSet.from_pairs(grid, [bad_cell]))
verdict = vk.is_admissible(spoiled, oracle, dive)
matches, where = vk.matches_optimal_policy(spoiled, oracle, dive)
print(f"viable set plus one critical cell {bad_cell}: admissible={verdict.admissible}, "
      f"policy match={matches} (first mismatch at state cell {where[:1]})")

# an admissible set does NOT need to be inside the viable set: for the
# affine nominal every unviable cell is noncritical, so padding the optimal
# graph with them changes nothing
graph = vk.optimal_policy_graph(oracle.viable, affine)
rng = np.random.default_rng(0)
padding = ~oracle.viable.members & ~crit.members \
    & (rng.random(oracle.viable.members.shape) < 0.5)
padded = vk.QSet(grid, graph.members | padding)
verdict = vk.is_admissible(padded, oracle, affine)
matches, _ = vk.matches_optimal_policy(padded, oracle, affine)
outside = padded.difference(oracle.viable).count()
print(f"\naffine nominal again: optimal graph plus {outside} unviable-but-"
      f"noncritical cells: admissible={verdict.admissible}, policy match={matches}")
