"""Constrained controllers, critical sets, and admissibility checks.

Given a nominal policy, constraining means executing the feasible action of
a state-action set that is closest to the nominal one (squared Euclidean
cost).  The critical set collects the unviable pairs, at viable states,
that cost no more than this constrained optimum; a set is admissible when
it contains the whole optimal-action graph of the viable set and misses the
critical set, which is equivalent to reproducing the optimal policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import GridMismatchError, GridSpec, QSet
from .viability import ViabilityResult


def squared_distance(actions: np.ndarray, a_nom: np.ndarray) -> np.ndarray:
    """Default cost: squared Euclidean distance to the nominal action."""
    diff = np.atleast_2d(actions) - np.asarray(a_nom, dtype=float).reshape(1, -1)
    return np.sum(diff * diff, axis=1)


class NominalPolicy:
    """Base class for the unconstrained controller being tracked."""

    deterministic: bool = True

    def nominal_action(self, state, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError


class AffinePolicy(NominalPolicy):
    """a(s) = offset + gain @ s, clamped to the action box."""

    deterministic = True

    def __init__(self, gain, offset, action_box):
        self.gain = np.atleast_2d(np.asarray(gain, dtype=float))
        self.offset = np.asarray(offset, dtype=float).reshape(-1)
        self.action_box = np.asarray(action_box, dtype=float)
        if self.gain.shape[0] != self.offset.size:
            raise ValueError("gain rows must match offset length")
        for arr in (self.gain, self.offset, self.action_box):
            arr.setflags(write=False)

    def nominal_action(self, state, rng=None):
        s = np.asarray(state, dtype=float).reshape(-1)
        a = self.offset + self.gain @ s
        return np.clip(a, self.action_box[:, 0], self.action_box[:, 1])


class TablePolicy(NominalPolicy):
    """Deterministic lookup of one action per state cell."""

    deterministic = True

    def __init__(self, grid: GridSpec, actions):
        self.grid = grid
        self.actions = np.asarray(actions, dtype=float).reshape(grid.state_count, grid.action_dim)
        self.actions.setflags(write=False)

    def nominal_action(self, state, rng=None):
        cell = self.grid.locate_state(np.asarray(state, dtype=float))
        if cell < 0:
            raise ValueError("state outside the table's grid")
        return self.actions[cell].copy()

    def action_at_cell(self, cell: int) -> np.ndarray:
        return self.actions[cell].copy()


class UniformRandomPolicy(NominalPolicy):
    """Stochastic nominal policy: uniform draw over the action box per query.

    With ``seed`` given the policy owns its generator and replays the same
    action sequence; otherwise each query uses the generator passed in.
    """

    deterministic = False

    def __init__(self, action_box, seed: int | None = None):
        self.action_box = np.asarray(action_box, dtype=float)
        self.action_box.setflags(write=False)
        self.seed = seed
        self._rng = np.random.default_rng(seed) if seed is not None else None

    def nominal_action(self, state, rng=None):
        gen = self._rng if self._rng is not None else rng
        if gen is None:
            raise ValueError("stochastic policy needs a generator")
        return gen.uniform(self.action_box[:, 0], self.action_box[:, 1])


def opt(k: QSet, state_cell: int, a_nom, cost=None) -> int | None:
    """Feasible action cell in ``k`` at ``state_cell`` minimizing the cost.

    Returns None when the slice is empty.  Cost ties resolve to the smallest
    action value (lexicographic for multi-dimensional actions).
    """
    slice_cells = k.action_slice(state_cell)
    if slice_cells.size == 0:
        return None
    actions = k.grid.action_values()[slice_cells]
    costs = (cost or squared_distance)(actions, a_nom)
    return int(slice_cells[int(np.argmin(costs))])


def opt_set(k: QSet, state_cell: int, a_nom, cost=None) -> np.ndarray:
    """All cost-minimizing action cells in the slice (empty if infeasible)."""
    slice_cells = k.action_slice(state_cell)
    if slice_cells.size == 0:
        return slice_cells
    actions = k.grid.action_values()[slice_cells]
    costs = (cost or squared_distance)(actions, a_nom)
    return slice_cells[costs == costs.min()]


def _require_deterministic(pi: NominalPolicy, what: str):
    if not pi.deterministic:
        raise ValueError(f"{what} needs a deterministic nominal policy")


def optimal_policy(viable: QSet, pi: NominalPolicy, cost=None) -> dict[int, int]:
    """Constrained-optimal action cell for every kernel state cell."""
    _require_deterministic(pi, "optimal_policy")
    kernel_cells = np.flatnonzero(viable.project().members)
    if kernel_cells.size == 0:
        raise ValueError("viable set has an empty projection")
    sv = viable.grid.state_values()
    return {int(i): opt(viable, int(i), pi.nominal_action(sv[i]), cost) for i in kernel_cells}


def optimal_policy_graph(viable: QSet, pi: NominalPolicy, cost=None) -> QSet:
    """All cost-minimizing viable pairs, one slice per kernel cell (set-valued)."""
    _require_deterministic(pi, "optimal_policy_graph")
    members = np.zeros_like(viable.members)
    sv = viable.grid.state_values()
    for i in np.flatnonzero(viable.project().members):
        members[i, opt_set(viable, int(i), pi.nominal_action(sv[i]), cost)] = True
    return QSet(viable.grid, members)


def critical_set(result: ViabilityResult, pi: NominalPolicy, cost=None) -> QSet:
    """Unviable pairs at kernel states costing no more than the viable optimum.

    The comparison is non-strict, so unviable pairs tying the optimal cost
    are critical.
    """
    _require_deterministic(pi, "critical_set")
    cost = cost or squared_distance
    grid = result.grid
    viable = result.viable.members
    av = grid.action_values()
    sv = grid.state_values()
    members = np.zeros_like(viable)
    # kernel states are never failure states, so every pair below lies in Q
    for i in np.flatnonzero(result.kernel.members):
        costs = cost(av, pi.nominal_action(sv[i]))
        best = costs[viable[i]].min()
        members[i] = ~viable[i] & (costs <= best)
    return QSet(grid, members)


def stochastic_critical_set(result: ViabilityResult) -> QSet:
    """Union of critical sets over every possible nominal draw.

    For a nominal policy that can propose any action, every unviable pair at
    a kernel state ties the optimum for the draw equal to its own action, so
    the union is exactly the unviable pairs with viable state.
    """
    members = result.kernel.members[:, np.newaxis] & ~result.viable.members
    return QSet(result.grid, members)


@dataclass(frozen=True)
class AdmissibilityVerdict:
    admissible: bool
    missing_optimal: tuple[tuple[int, int], ...]
    critical_overlap: tuple[tuple[int, int], ...]


def is_admissible(k: QSet, result: ViabilityResult, pi: NominalPolicy, cost=None) -> AdmissibilityVerdict:
    """Decide admissibility: contains the optimal graph, misses the critical set.

    For a stochastic nominal policy the optimal graph sweeps the whole viable
    set and the critical set is its unviable complement at kernel states.
    """
    if k.grid != result.grid:
        raise GridMismatchError("set and viability result use different grids")
    if pi.deterministic:
        required = optimal_policy_graph(result.viable, pi, cost)
        crit = critical_set(result, pi, cost)
    else:
        required = result.viable
        crit = stochastic_critical_set(result)
    missing = required.difference(k)
    overlap = k.intersect(crit)
    return AdmissibilityVerdict(
        admissible=missing.count() == 0 and overlap.count() == 0,
        missing_optimal=tuple((int(i), int(j)) for i, j in np.argwhere(missing.members)),
        critical_overlap=tuple((int(i), int(j)) for i, j in np.argwhere(overlap.members)),
    )


def matches_optimal_policy(k: QSet, result: ViabilityResult, pi: NominalPolicy,
                           cost=None) -> tuple[bool, list[int]]:
    """Direct check: per kernel cell, the argmin sets over ``k`` and over the
    viable set must coincide.  Returns the mismatching state cells."""
    _require_deterministic(pi, "matches_optimal_policy")
    sv = result.grid.state_values()
    mismatches = []
    for i in np.flatnonzero(result.kernel.members):
        a_nom = pi.nominal_action(sv[i])
        got = opt_set(k, int(i), a_nom, cost)
        want = opt_set(result.viable, int(i), a_nom, cost)
        if got.size != want.size or not np.array_equal(np.sort(got), np.sort(want)):
            mismatches.append(int(i))
    return not mismatches, mismatches
