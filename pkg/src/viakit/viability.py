"""Ground-truth viability analysis on the grid.

The kernel is the maximal set of states from which some action keeps the
system alive forever; the viable set is the maximal set of state-action
pairs whose successor lands in the kernel.  Both are obtained by a
monotone fixed-point iteration over a cached transition table, so they
serve as the reference that every learned constraint is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SystemModel, step_many
from .lattice import OUTSIDE, GridMismatchError, GridSpec, QSet, SSet, grid_to_dict, set_to_dict

FAILED = -1


def tabulate(model: SystemModel, grid: GridSpec) -> np.ndarray:
    """Transition table: (state cell, action cell) -> successor cell or FAILED.

    Successors that fail during the hold, land outside the state box, or
    land on a failing grid state collapse to FAILED.  Rows whose start state
    fails the predicate are entirely FAILED.
    """
    sv = grid.state_values()
    av = grid.action_values()
    n_s, n_a = grid.state_count, grid.action_count
    failing = np.asarray(model.failure_predicate(sv), dtype=bool)

    table = np.full((n_s, n_a), FAILED, dtype=np.int64)
    live_states = np.flatnonzero(~failing)
    if live_states.size == 0:
        return table

    starts = np.repeat(sv[live_states], n_a, axis=0)
    actions = np.tile(av, (live_states.size, 1))
    finals, failed = step_many(model, starts, actions)
    cells = grid.locate_states(finals)
    landed_failing = np.where(cells >= 0, failing[np.clip(cells, 0, None)], True)
    cells = np.where(failed | (cells == OUTSIDE) | landed_failing, FAILED, cells)
    table[live_states] = cells.reshape(live_states.size, n_a)
    return table


@dataclass(frozen=True)
class ViabilityResult:
    """Viability kernel and viable set over a grid, plus the table behind them."""

    model_name: str
    grid: GridSpec
    table: np.ndarray
    kernel: SSet
    viable: QSet
    iterations: int

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.int64)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "grid": grid_to_dict(self.grid),
            "iterations": self.iterations,
            "kernel": set_to_dict(self.kernel),
            "viable": set_to_dict(self.viable),
        }


def viability_from_table(grid: GridSpec, table: np.ndarray,
                         failing_states=None, model_name: str = "table") -> ViabilityResult:
    """Fixed-point iteration on a precomputed transition table.

    Starting from all non-failing state cells, alternately restrict the
    state-action set to pairs landing in the surviving states and shrink the
    surviving states to the set's projection, until nothing changes.
    """
    table = np.asarray(table, dtype=np.int64)
    if table.shape != (grid.state_count, grid.action_count):
        raise ValueError("table shape does not match grid")
    if failing_states is None:
        failing_states = np.zeros(grid.state_count, dtype=bool)
    survivors = ~np.asarray(failing_states, dtype=bool)

    ok = table != FAILED
    dest = np.clip(table, 0, None)
    iterations = 0
    while True:
        iterations += 1
        viable_members = ok & survivors[dest]
        shrunk = viable_members.any(axis=1) & survivors
        if np.array_equal(shrunk, survivors):
            break
        survivors = shrunk
    return ViabilityResult(
        model_name=model_name,
        grid=grid,
        table=table,
        kernel=SSet(grid, survivors),
        viable=QSet(grid, viable_members),
        iterations=iterations,
    )


def compute_viability(model: SystemModel, grid: GridSpec) -> ViabilityResult:
    """Tabulate the model on the grid and run the fixed-point iteration."""
    sv = grid.state_values()
    failing = np.asarray(model.failure_predicate(sv), dtype=bool)
    table = tabulate(model, grid)
    return viability_from_table(grid, table, failing_states=failing, model_name=model.name)


def is_control_constraint(q: QSet, result: ViabilityResult) -> tuple[bool, tuple[int, int] | None]:
    """Check that every member pair transitions back into the set's projection.

    Returns ``(True, None)`` or ``(False, witness)`` with one violating
    (state cell, action cell) pair.
    """
    if q.grid != result.grid:
        raise GridMismatchError("set and viability result use different grids")
    proj = q.project().members
    ok = (result.table != FAILED) & proj[np.clip(result.table, 0, None)]
    bad = q.members & ~ok
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return False, (int(i), int(j))
    return True, None


@dataclass(frozen=True)
class PruneRejection:
    """Removal was refused because it would empty this state cell's slice."""

    state_cell: int


def prune(a: QSet, c: QSet, result: ViabilityResult) -> QSet | PruneRejection:
    """Remove ``c`` from the control constraint ``a`` if the projection survives.

    Dropping pairs from a control constraint is safe exactly when no state
    loses its last action; otherwise the rejection names an emptied cell.
    """
    ok, witness = is_control_constraint(a, result)
    if not ok:
        raise ValueError(f"prune() requires a control constraint; witness {witness}")
    diff = a.difference(c)
    proj_a = a.project().members
    proj_d = diff.project().members
    if np.array_equal(proj_a, proj_d):
        return diff
    emptied = int(np.flatnonzero(proj_a & ~proj_d)[0])
    return PruneRejection(state_cell=emptied)
