"""Boolean set lattices over regular state and state-action grids.

Subsets of state-action space are stored as one membership bit per grid
point pair (:class:`QSet`); subsets of state space as one bit per state
grid point (:class:`SSet`).  Values are immutable after construction, and
all operations are pure, so concurrent reads are safe.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

OUTSIDE = -1

SET_SCHEMA_VERSION = 1


class GridMismatchError(ValueError):
    """Raised when combining sets that live on different grids."""


@dataclass(frozen=True)
class GridAxis:
    """One uniformly spaced axis, endpoints included."""

    lower: float
    upper: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("axis needs at least 2 points")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError("axis bounds must be finite with lower < upper")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.points - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.points)


def _cartesian(axes: tuple[GridAxis, ...]) -> np.ndarray:
    grids = np.meshgrid(*[ax.values() for ax in axes], indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, len(axes))


@dataclass(frozen=True)
class GridSpec:
    """Regular grid over the state box and the action box."""

    state_axes: tuple[GridAxis, ...]
    action_axes: tuple[GridAxis, ...]

    def __post_init__(self):
        object.__setattr__(self, "state_axes", tuple(self.state_axes))
        object.__setattr__(self, "action_axes", tuple(self.action_axes))
        if not self.state_axes or not self.action_axes:
            raise ValueError("grid needs at least one state and one action axis")

    @classmethod
    def from_boxes(cls, state_box, action_box, state_points, action_points) -> "GridSpec":
        state_box = np.asarray(state_box, dtype=float)
        action_box = np.asarray(action_box, dtype=float)
        state_points = np.broadcast_to(np.asarray(state_points, dtype=int), (state_box.shape[0],))
        action_points = np.broadcast_to(np.asarray(action_points, dtype=int), (action_box.shape[0],))
        return cls(
            tuple(GridAxis(lo, hi, int(p)) for (lo, hi), p in zip(state_box, state_points)),
            tuple(GridAxis(lo, hi, int(p)) for (lo, hi), p in zip(action_box, action_points)),
        )

    @property
    def state_dim(self) -> int:
        return len(self.state_axes)

    @property
    def action_dim(self) -> int:
        return len(self.action_axes)

    @property
    def state_count(self) -> int:
        return int(np.prod([ax.points for ax in self.state_axes]))

    @property
    def action_count(self) -> int:
        return int(np.prod([ax.points for ax in self.action_axes]))

    def state_values(self) -> np.ndarray:
        """All state grid points, C-ordered, shape (state_count, n)."""
        return _cartesian(self.state_axes)

    def action_values(self) -> np.ndarray:
        """All action grid points, C-ordered, shape (action_count, m)."""
        return _cartesian(self.action_axes)

    def state_value(self, cell: int) -> np.ndarray:
        idx = np.unravel_index(cell, tuple(ax.points for ax in self.state_axes))
        return np.array([ax.values()[i] for ax, i in zip(self.state_axes, idx)])

    def action_value(self, cell: int) -> np.ndarray:
        idx = np.unravel_index(cell, tuple(ax.points for ax in self.action_axes))
        return np.array([ax.values()[i] for ax, i in zip(self.action_axes, idx)])

    def locate_states(self, states) -> np.ndarray:
        """Nearest state cell per row; OUTSIDE where a point leaves the box.

        Exact midpoints resolve to the lower index.
        """
        s = np.asarray(states, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.state_dim:
            raise ValueError("states must have shape (N, state_dim)")
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite state passed to locate")
        inside = np.ones(s.shape[0], dtype=bool)
        per_axis = []
        for k, ax in enumerate(self.state_axes):
            x = s[:, k]
            inside &= (x >= ax.lower) & (x <= ax.upper)
            pos = (x - ax.lower) / ax.spacing
            idx = np.ceil(pos - 0.5).astype(np.int64)
            per_axis.append(np.clip(idx, 0, ax.points - 1))
        flat = np.ravel_multi_index(tuple(per_axis), tuple(ax.points for ax in self.state_axes))
        flat = flat.astype(np.int64)
        flat[~inside] = OUTSIDE
        return flat

    def locate_state(self, s) -> int:
        """Nearest grid index for one state, or OUTSIDE."""
        s = np.asarray(s, dtype=float).reshape(1, -1)
        return int(self.locate_states(s)[0])

    def enclosing_state_cells(self, s) -> np.ndarray:
        """The 2^n grid cells whose hyper-cell encloses ``s`` (empty if outside)."""
        s = np.asarray(s, dtype=float).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite state passed to enclosing_state_cells")
        corners = []
        for k, ax in enumerate(self.state_axes):
            if s[k] < ax.lower or s[k] > ax.upper:
                return np.empty(0, dtype=np.int64)
            pos = (s[k] - ax.lower) / ax.spacing
            lo = int(np.clip(np.floor(pos), 0, ax.points - 1))
            hi = int(np.clip(np.ceil(pos), 0, ax.points - 1))
            corners.append(sorted({lo, hi}))
        mesh = np.meshgrid(*corners, indexing="ij")
        flat = np.ravel_multi_index(tuple(m.ravel() for m in mesh),
                                    tuple(ax.points for ax in self.state_axes))
        return flat.astype(np.int64)


def _frozen_bool(members, shape) -> np.ndarray:
    arr = np.array(members, dtype=bool).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QSet:
    """A subset of the state-action grid: one bit per (state cell, action cell)."""

    grid: GridSpec
    members: np.ndarray

    def __post_init__(self):
        shape = (self.grid.state_count, self.grid.action_count)
        object.__setattr__(self, "members", _frozen_bool(self.members, shape))

    @classmethod
    def empty(cls, grid: GridSpec) -> "QSet":
        return cls(grid, np.zeros((grid.state_count, grid.action_count), dtype=bool))

    @classmethod
    def full(cls, grid: GridSpec) -> "QSet":
        return cls(grid, np.ones((grid.state_count, grid.action_count), dtype=bool))

    @classmethod
    def from_pairs(cls, grid: GridSpec, pairs) -> "QSet":
        members = np.zeros((grid.state_count, grid.action_count), dtype=bool)
        for i, j in pairs:
            members[i, j] = True
        return cls(grid, members)

    def _check(self, other: "QSet"):
        if self.grid != other.grid:
            raise GridMismatchError("operands live on different grids")

    def union(self, other: "QSet") -> "QSet":
        self._check(other)
        return QSet(self.grid, self.members | other.members)

    def intersect(self, other: "QSet") -> "QSet":
        self._check(other)
        return QSet(self.grid, self.members & other.members)

    def difference(self, other: "QSet") -> "QSet":
        self._check(other)
        return QSet(self.grid, self.members & ~other.members)

    def count(self) -> int:
        return int(self.members.sum())

    def project(self) -> "SSet":
        """States that appear in at least one member pair."""
        return SSet(self.grid, self.members.any(axis=1))

    def action_slice(self, state_cell: int) -> np.ndarray:
        """Action cells paired with ``state_cell``; may be empty."""
        if not 0 <= state_cell < self.grid.state_count:
            raise IndexError("state cell out of range")
        return np.flatnonzero(self.members[state_cell])

    def __eq__(self, other):
        if not isinstance(other, QSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.members, other.members)

    def __hash__(self):
        return hash((self.grid, self.members.tobytes()))


@dataclass(frozen=True, eq=False)
class SSet:
    """A subset of the state grid: one bit per state cell."""

    grid: GridSpec
    members: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "members", _frozen_bool(self.members, (self.grid.state_count,)))

    @classmethod
    def empty(cls, grid: GridSpec) -> "SSet":
        return cls(grid, np.zeros(grid.state_count, dtype=bool))

    @classmethod
    def full(cls, grid: GridSpec) -> "SSet":
        return cls(grid, np.ones(grid.state_count, dtype=bool))

    def _check(self, other: "SSet"):
        if self.grid != other.grid:
            raise GridMismatchError("operands live on different grids")

    def union(self, other: "SSet") -> "SSet":
        self._check(other)
        return SSet(self.grid, self.members | other.members)

    def intersect(self, other: "SSet") -> "SSet":
        self._check(other)
        return SSet(self.grid, self.members & other.members)

    def difference(self, other: "SSet") -> "SSet":
        self._check(other)
        return SSet(self.grid, self.members & ~other.members)

    def count(self) -> int:
        return int(self.members.sum())

    def __eq__(self, other):
        if not isinstance(other, SSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.members, other.members)

    def __hash__(self):
        return hash((self.grid, self.members.tobytes()))


# --- serialization ---------------------------------------------------------

def _rle_encode(flat: np.ndarray) -> list[int]:
    """Run lengths of a flat boolean array, first run counting False bits."""
    flat = np.asarray(flat, dtype=bool).ravel()
    if flat.size == 0:
        return []
    switches = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], switches, [flat.size]))
    runs = np.diff(bounds).astype(int).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def _rle_decode(runs, size: int) -> np.ndarray:
    flat = np.zeros(size, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if run < 0:
            raise ValueError("negative run length")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    if pos != size:
        raise ValueError(f"run lengths cover {pos} bits, expected {size}")
    return flat


def grid_to_dict(grid: GridSpec) -> dict:
    return {
        "state_axes": [{"lower": ax.lower, "upper": ax.upper, "points": ax.points}
                       for ax in grid.state_axes],
        "action_axes": [{"lower": ax.lower, "upper": ax.upper, "points": ax.points}
                        for ax in grid.action_axes],
    }


def grid_from_dict(d: dict) -> GridSpec:
    return GridSpec(
        tuple(GridAxis(a["lower"], a["upper"], a["points"]) for a in d["state_axes"]),
        tuple(GridAxis(a["lower"], a["upper"], a["points"]) for a in d["action_axes"]),
    )


def set_to_dict(obj: QSet | SSet, metadata: dict | None = None) -> dict:
    d = {
        "schema_version": SET_SCHEMA_VERSION,
        "kind": "qset" if isinstance(obj, QSet) else "sset",
        "grid": grid_to_dict(obj.grid),
        "rle": _rle_encode(obj.members),
        "true_count": obj.count(),
    }
    if metadata:
        d["metadata"] = dict(metadata)
    return d


def set_from_dict(d: dict) -> QSet | SSet:
    if d.get("schema_version") != SET_SCHEMA_VERSION:
        raise ValueError(f"unsupported set schema_version {d.get('schema_version')!r}")
    grid = grid_from_dict(d["grid"])
    if d["kind"] == "qset":
        size = grid.state_count * grid.action_count
        flat = _rle_decode(d["rle"], size)
        obj = QSet(grid, flat.reshape(grid.state_count, grid.action_count))
    elif d["kind"] == "sset":
        flat = _rle_decode(d["rle"], grid.state_count)
        obj = SSet(grid, flat)
    else:
        raise ValueError(f"unknown set kind {d['kind']!r}")
    if obj.count() != d["true_count"]:
        raise ValueError("true_count does not match decoded bitmap")
    return obj


def atomic_write_text(path, text: str):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_set(path, obj: QSet | SSet, metadata: dict | None = None):
    atomic_write_text(path, json.dumps(set_to_dict(obj, metadata), indent=1))


def load_set(path) -> QSet | SSet:
    with open(path) as handle:
        return set_from_dict(json.load(handle))


def _coord_header(grid: GridSpec, with_actions: bool) -> list[str]:
    names = [f"state{k}" for k in range(grid.state_dim)]
    if with_actions:
        names += [f"action{k}" for k in range(grid.action_dim)]
    return names


def write_cells_csv(path, obj: QSet | SSet):
    """One row per true cell: state coordinates, then action coordinates."""
    grid = obj.grid
    rows = []
    if isinstance(obj, QSet):
        sv = grid.state_values()
        av = grid.action_values()
        for i, j in np.argwhere(obj.members):
            rows.append([repr(float(x)) for x in sv[i]] + [repr(float(x)) for x in av[j]])
        header = _coord_header(grid, with_actions=True)
    else:
        sv = grid.state_values()
        for i in np.flatnonzero(obj.members):
            rows.append([repr(float(x)) for x in sv[i]])
        header = _coord_header(grid, with_actions=False)
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
