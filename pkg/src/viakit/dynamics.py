"""Discrete-time system models obtained by zero-order-hold integration.

A :class:`SystemModel` wraps a continuous-time vector field together with
state/action boxes, a fixed hold duration, and a failure predicate.  One
discrete step integrates the field with classical fixed-step RK4 while the
action is held constant, checking the failure predicate after every substep.
All operations are pure and deterministic; models are immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


class IntegrationError(RuntimeError):
    """Raised when integration produces a non-finite state."""


def _as_box(box) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("box must have shape (dims, 2)")
    if not np.all(np.isfinite(b)):
        raise ValueError("box bounds must be finite")
    if not np.all(b[:, 0] < b[:, 1]):
        raise ValueError("box lower bounds must be below upper bounds")
    return b


def outside_box_predicate(box) -> Callable[[np.ndarray], np.ndarray]:
    """Failure predicate that is true anywhere outside the closed box."""
    b = _as_box(box)
    lo, hi = b[:, 0], b[:, 1]

    def predicate(s):
        s = np.asarray(s, dtype=float)
        return np.any((s < lo) | (s > hi), axis=-1)

    return predicate


def never_fails(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.zeros(s.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class SystemModel:
    """Zero-order-hold discretization of a controlled vector field.

    ``vector_field(s, a)`` must accept arrays shaped ``(..., n)`` and
    ``(..., m)`` and return the state derivative shaped ``(..., n)``.
    ``failure_predicate(s)`` must be total on R^n and vectorized over
    leading axes.  ``substep`` must divide ``hold_duration`` evenly.
    """

    name: str
    state_box: np.ndarray
    action_box: np.ndarray
    vector_field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hold_duration: float
    substep: float
    failure_predicate: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=never_fails)

    def __post_init__(self):
        object.__setattr__(self, "state_box", _as_box(self.state_box))
        object.__setattr__(self, "action_box", _as_box(self.action_box))
        self.state_box.setflags(write=False)
        self.action_box.setflags(write=False)
        if not (self.hold_duration > 0 and np.isfinite(self.hold_duration)):
            raise ValueError("hold_duration must be positive and finite")
        if not (self.substep > 0 and np.isfinite(self.substep)):
            raise ValueError("substep must be positive and finite")
        if _substep_count(self.hold_duration, self.substep) is None:
            raise ValueError("substep must divide hold_duration evenly")

    @property
    def state_dim(self) -> int:
        return self.state_box.shape[0]

    @property
    def action_dim(self) -> int:
        return self.action_box.shape[0]

    @property
    def substeps_per_hold(self) -> int:
        return _substep_count(self.hold_duration, self.substep)

    def contains_action(self, a) -> bool:
        a = np.asarray(a, dtype=float).reshape(-1)
        return bool(np.all(a >= self.action_box[:, 0]) and np.all(a <= self.action_box[:, 1]))

    def with_substep(self, substep: float) -> "SystemModel":
        return replace(self, substep=substep)


@dataclass(frozen=True)
class StepOutcome:
    """Result of one discrete step: the next state, or the first failing substep state."""

    failed: bool
    state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float).reshape(-1))
        self.state.setflags(write=False)

    @classmethod
    def alive(cls, state) -> "StepOutcome":
        return cls(False, state)

    @classmethod
    def failed_at(cls, state) -> "StepOutcome":
        return cls(True, state)


def _substep_count(duration: float, substep: float) -> int | None:
    n = duration / substep
    rounded = int(round(n))
    if rounded < 1 or abs(n - rounded) > 1e-9 * max(1.0, rounded):
        return None
    return rounded


def _rk4_substep(f, s, a, h):
    k1 = f(s, a)
    k2 = f(s + (0.5 * h) * k1, a)
    k3 = f(s + (0.5 * h) * k2, a)
    k4 = f(s + h * k3, a)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow(model: SystemModel, s, a, duration: float) -> np.ndarray:
    """Integrate the held-action dynamics for ``duration`` seconds.

    Classical RK4 with fixed step ``model.substep``; ``duration`` must be a
    nonnegative integer multiple of the substep.  No failure checking.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if not model.contains_action(a):
        raise ValueError("action outside action_box")
    if duration == 0:
        return s.copy()
    n = _substep_count(duration, model.substep)
    if n is None:
        raise ValueError("duration must be an integer multiple of substep")
    cur = s[np.newaxis, :]
    av = a[np.newaxis, :]
    h = model.substep
    for _ in range(n):
        cur = _rk4_substep(model.vector_field, cur, av, h)
        if not np.all(np.isfinite(cur)):
            raise IntegrationError(f"non-finite state while integrating {model.name}")
    return cur[0]


def step_many(model: SystemModel, states, actions) -> tuple[np.ndarray, np.ndarray]:
    """Apply one discrete step to a batch of state/action pairs.

    Returns ``(final_states, failed)``.  A trajectory that violates the
    failure predicate is frozen at its first failing substep state, which is
    what ``final_states`` reports for it.  Start states must be non-failing.
    """
    s = np.asarray(states, dtype=float)
    a = np.asarray(actions, dtype=float)
    if s.ndim != 2 or a.ndim != 2 or s.shape[0] != a.shape[0]:
        raise ValueError("states and actions must be (N, n) and (N, m)")
    alive = np.ones(s.shape[0], dtype=bool)
    h = model.substep
    cur = s.copy()
    for _ in range(model.substeps_per_hold):
        nxt = _rk4_substep(model.vector_field, cur, a, h)
        if not np.all(np.isfinite(nxt[alive])):
            raise IntegrationError(f"non-finite state while integrating {model.name}")
        # advance only still-alive trajectories; failed ones stay frozen
        cur = np.where(alive[:, np.newaxis], nxt, cur)
        alive &= ~model.failure_predicate(cur)
    return cur, ~alive


def step(model: SystemModel, s, a) -> StepOutcome:
    """One discrete step with per-substep failure detection."""
    s = np.asarray(s, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if bool(model.failure_predicate(s)):
        raise ValueError("step() called from a failing start state")
    if not model.contains_action(a):
        raise ValueError("action outside action_box")
    final, failed = step_many(model, s[np.newaxis, :], a[np.newaxis, :])
    if failed[0]:
        return StepOutcome.failed_at(final[0])
    return StepOutcome.alive(final[0])


# --- built-in models -------------------------------------------------------

def hovership_field(s, a):
    """1-D altitude dynamics: thrust against gravity and saturating drag."""
    ds = a[..., 0] - 0.1 - np.tanh(0.75 * s[..., 0])
    return ds[..., np.newaxis]


def still_field(s, a):
    return np.zeros_like(np.asarray(s, dtype=float))


def sink_field(s, a):
    """Constant downward drift, partially countered by the action."""
    ds = a[..., 0] - 0.25
    return ds[..., np.newaxis]


VECTOR_FIELDS: dict[str, Callable] = {
    "hovership": hovership_field,
    "still": still_field,
    "sink": sink_field,
}

FAILURE_SPECS = ("outside_state_box", "never")


def hovership_model(hold_duration: float = 1.0, substep: float = 0.01) -> SystemModel:
    """The 1-D hovership benchmark: s in [0, 2], a in [0, 0.8], 1 s hold.

    Failure is leaving the state box at any substep; with the default one
    second hold, low altitudes combined with low thrust overshoot the lower
    bound before the hold expires.
    """
    state_box = [[0.0, 2.0]]
    return SystemModel(
        name="hovership",
        state_box=state_box,
        action_box=[[0.0, 0.8]],
        vector_field=hovership_field,
        hold_duration=hold_duration,
        substep=substep,
        failure_predicate=outside_box_predicate(state_box),
    )


def build_model(name, *, state_box=None, action_box=None, vector_field=None,
                hold_duration=1.0, substep=0.01, failure="outside_state_box") -> SystemModel:
    """Construct a model from config-style fields or a builtin name."""
    if name == "hovership" and state_box is None:
        return hovership_model(hold_duration=hold_duration, substep=substep)
    if vector_field not in VECTOR_FIELDS:
        raise ValueError(f"unknown vector field {vector_field!r}")
    if failure not in FAILURE_SPECS:
        raise ValueError(f"unknown failure spec {failure!r}")
    state_box = _as_box(state_box)
    predicate = outside_box_predicate(state_box) if failure == "outside_state_box" else never_fails
    return SystemModel(
        name=name,
        state_box=state_box,
        action_box=action_box,
        vector_field=VECTOR_FIELDS[vector_field],
        hold_duration=hold_duration,
        substep=substep,
        failure_predicate=predicate,
    )
