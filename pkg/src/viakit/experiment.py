"""Greedy on-policy constraint learning over batched episodes.

Each step executes the constrained optimum of the current estimate when the
slice at the current state is nonempty, otherwise falls back to the nominal
action; the observed transition is labeled and fed to the learner, and the
estimate is rebuilt.  Episodes end on failure or after a step cap; batches
end with a hyperparameter update.  A run is strictly sequential and fully
determined by its seed.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import learner as gp
from .dynamics import SystemModel, step
from .lattice import (GridMismatchError, GridSpec, QSet, atomic_write_text,
                      load_set, save_set)
from .policy import (NominalPolicy, critical_set, opt, squared_distance,
                     stochastic_critical_set)
from .viability import ViabilityResult

RUN_SCHEMA_VERSION = 1


class UnrecoverableConstraintError(RuntimeError):
    """The constraint estimate's projection emptied; no episode can start."""

    def __init__(self, batch: int, episode: int):
        super().__init__(f"constraint projection empty at batch {batch}, episode {episode}")
        self.batch = batch
        self.episode = episode


@dataclass(frozen=True)
class ExperimentConfig:
    model: SystemModel
    grid: GridSpec
    policy: NominalPolicy
    learner: gp.LearnerConfig
    episodes_per_batch: int = 10
    batch_count: int = 2
    max_steps_per_episode: int = 10
    seed: int = 0
    fallback: str = "nominal"  # or "uniform"
    conservative_membership: bool = False
    config_echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.episodes_per_batch, self.batch_count, self.max_steps_per_episode) < 1:
            raise ValueError("episode, batch, and step counts must be >= 1")
        if self.fallback not in ("nominal", "uniform"):
            raise ValueError("fallback must be 'nominal' or 'uniform'")


@dataclass(frozen=True)
class StepLog:
    episode: int
    step: int
    state: tuple[float, ...]
    nominal: tuple[float, ...]
    action: tuple[float, ...]
    feasible: bool
    label: float


@dataclass
class RunRecord:
    model_name: str
    seed: int
    steps: list[StepLog]
    episode_lengths: list[int]
    batch_hypers: list[gp.GpHyperparams]
    khat_initial: QSet
    khat_final: QSet
    config_echo: dict = field(default_factory=dict)
    metrics: dict | None = None

    @property
    def sample_count(self) -> int:
        return len(self.steps)

    @property
    def failure_count(self) -> int:
        return sum(1 for s in self.steps if s.label == 0.0)


class ExploreChoice(NamedTuple):
    action: np.ndarray
    feasible: bool
    nominal: np.ndarray


def _slice_mask(khat: QSet, s, conservative: bool) -> np.ndarray:
    """Action availability at a continuous state under the chosen membership mode."""
    grid = khat.grid
    if conservative:
        cells = grid.enclosing_state_cells(s)
        if cells.size == 0:
            return np.zeros(grid.action_count, dtype=bool)
        return khat.members[cells].all(axis=0)
    cell = grid.locate_state(s)
    if cell < 0:
        return np.zeros(grid.action_count, dtype=bool)
    return khat.members[cell]


def _choose_action(grid: GridSpec, mask: np.ndarray, s, pi: NominalPolicy,
                   rng: np.random.Generator, fallback: str, cost=None) -> ExploreChoice:
    a_nom = np.asarray(pi.nominal_action(s, rng), dtype=float).reshape(-1)
    if mask.any():
        av = grid.action_values()
        costs = (cost or squared_distance)(av[mask], a_nom)
        j = int(np.flatnonzero(mask)[int(np.argmin(costs))])
        return ExploreChoice(av[j].copy(), True, a_nom)
    if fallback == "uniform":
        lo, hi = np.array([[ax.lower, ax.upper] for ax in grid.action_axes]).T
        return ExploreChoice(rng.uniform(lo, hi), False, a_nom)
    return ExploreChoice(a_nom, False, a_nom)


def explore_action(khat: QSet, s, pi: NominalPolicy, rng: np.random.Generator,
                   fallback: str = "nominal", conservative: bool = False,
                   cost=None) -> ExploreChoice:
    """Constrained-greedy action at ``s``: track the nominal inside the estimate.

    When the slice at ``s`` is empty the choice is infeasible and falls back
    to the nominal action (or a uniform draw, if configured so).
    """
    mask = _slice_mask(khat, s, conservative)
    return _choose_action(khat.grid, mask, s, pi, rng, fallback, cost)


def _estimate_slice_mask(gp_model: gp.GpModel, grid: GridSpec, threshold: float,
                         s, conservative: bool) -> np.ndarray:
    """Action mask of the current estimate at ``s``, evaluated on the fly.

    Computes the posterior mean only on the grid rows the membership mode
    needs, which is value-identical to thresholding the full estimate.
    """
    if conservative:
        cells = grid.enclosing_state_cells(s)
        if cells.size == 0:
            return np.zeros(grid.action_count, dtype=bool)
    else:
        cell = grid.locate_state(s)
        if cell < 0:
            return np.zeros(grid.action_count, dtype=bool)
        cells = np.array([cell])
    sv = grid.state_values()[cells]
    av = grid.action_values()
    points = np.hstack([np.repeat(sv, av.shape[0], axis=0), np.tile(av, (cells.size, 1))])
    member = gp.posterior_mean_many(gp_model, points) >= threshold
    return member.reshape(cells.size, grid.action_count).all(axis=0)


def run_episode(state0, khat: QSet, model: SystemModel, pi: NominalPolicy,
                gp_model: gp.GpModel, cfg: gp.LearnerConfig, max_steps: int,
                rng: np.random.Generator, fallback: str = "nominal",
                conservative: bool = False):
    """One episode of greedy exploration; returns (step logs, model, estimate).

    The start state must lie in the projection of the current estimate.  The
    estimate is rebuilt after every observation (or once per episode when
    the learner is configured that way), and the episode terminates
    immediately on failure.  Intermediate estimates are evaluated only on
    the grid rows each step consults; the returned estimate is materialized
    in full.
    """
    grid = khat.grid
    cell = grid.locate_state(state0)
    if cell < 0 or not khat.members[cell].any():
        raise ValueError("episode start state outside the estimate's projection")
    s = np.asarray(state0, dtype=float).reshape(-1)
    logs = []
    stale = False
    for k in range(max_steps):
        if cfg.refit == "sample" and stale:
            mask = _estimate_slice_mask(gp_model, grid, cfg.threshold, s, conservative)
            choice = _choose_action(grid, mask, s, pi, rng, fallback)
        else:
            choice = explore_action(khat, s, pi, rng, fallback, conservative)
        outcome = step(model, s, choice.action)
        gp_model = gp.observe(gp_model, s, choice.action, outcome)
        stale = True
        logs.append(StepLog(
            episode=-1, step=k,
            state=tuple(float(x) for x in s),
            nominal=tuple(float(x) for x in choice.nominal),
            action=tuple(float(x) for x in choice.action),
            feasible=bool(choice.feasible),
            label=0.0 if outcome.failed else 1.0,
        ))
        if outcome.failed:
            break
        s = outcome.state
    if cfg.refit == "sample" and stale:
        khat = gp.constraint_estimate(gp_model, grid, cfg.threshold)
    elif cfg.refit == "episode":
        khat = gp.constraint_estimate(gp_model, grid, cfg.threshold)
    return logs, gp_model, khat


def run_experiment(config: ExperimentConfig) -> RunRecord:
    """Run all batches of episodes; fully deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    cfg = config.learner
    gp_model = gp.fit(cfg.seed_samples(), cfg.hyper)
    khat0 = gp.constraint_estimate(gp_model, config.grid, cfg.threshold)
    khat = khat0

    steps: list[StepLog] = []
    episode_lengths: list[int] = []
    batch_hypers: list[gp.GpHyperparams] = []
    episode = 0
    for batch in range(config.batch_count):
        for _ in range(config.episodes_per_batch):
            start_cells = np.flatnonzero(khat.project().members)
            if start_cells.size == 0:
                raise UnrecoverableConstraintError(batch, episode)
            state0 = config.grid.state_value(int(rng.choice(start_cells)))
            logs, gp_model, khat = run_episode(
                state0, khat, config.model, config.policy, gp_model, cfg,
                config.max_steps_per_episode, rng,
                fallback=config.fallback, conservative=config.conservative_membership)
            steps.extend(StepLog(episode, l.step, l.state, l.nominal, l.action,
                                 l.feasible, l.label) for l in logs)
            episode_lengths.append(len(logs))
            episode += 1
        gp_model = gp.update_hyperparameters(gp_model, cfg.search_grid)
        khat = gp.constraint_estimate(gp_model, config.grid, cfg.threshold)
        batch_hypers.append(gp_model.hyper)

    return RunRecord(
        model_name=config.model.name,
        seed=config.seed,
        steps=steps,
        episode_lengths=episode_lengths,
        batch_hypers=batch_hypers,
        khat_initial=khat0,
        khat_final=khat,
        config_echo=dict(config.config_echo),
    )


def _action_range(grid: GridSpec) -> float:
    spans = np.array([ax.upper - ax.lower for ax in grid.action_axes])
    return float(np.sqrt(np.sum(spans * spans)))


def compute_metrics(record: RunRecord, oracle: ViabilityResult, pi: NominalPolicy,
                    cost=None) -> dict:
    """Run-quality metrics against the ground-truth viability oracle.

    Deviation percentages (of the action-range amplitude) compare the
    constrained policy under the final estimate with the constrained optimum
    under the viable set on every kernel cell; they require a deterministic
    nominal policy and are reported as None otherwise.  Set-error
    percentages count cells of the viable set missed by the estimate and
    cells of the critical set wrongly included.
    """
    khat = record.khat_final
    if khat.grid != oracle.grid:
        raise GridMismatchError("run and oracle use different grids")
    grid = oracle.grid
    qv = oracle.viable
    under = 100.0 * qv.difference(khat).count() / qv.count() if qv.count() else 0.0
    crit = critical_set(oracle, pi, cost) if pi.deterministic else stochastic_critical_set(oracle)
    over = 100.0 * khat.intersect(crit).count() / max(1, crit.count())

    deviation_mean = deviation_max = None
    if pi.deterministic:
        sv = grid.state_values()
        av = grid.action_values()
        rng_amp = _action_range(grid)
        devs = []
        for i in np.flatnonzero(oracle.kernel.members):
            a_nom = pi.nominal_action(sv[i])
            j_hat = opt(khat, int(i), a_nom, cost)
            a_hat = av[j_hat] if j_hat is not None else a_nom  # infeasible -> nominal fallback
            a_star = av[opt(qv, int(i), a_nom, cost)]
            devs.append(np.linalg.norm(a_hat - a_star) / rng_amp * 100.0)
        deviation_mean = float(np.mean(devs))
        deviation_max = float(np.max(devs))

    return {
        "sample_count": record.sample_count,
        "failure_count": record.failure_count,
        "deviation_mean_pct": deviation_mean,
        "deviation_max_pct": deviation_max,
        "underestimate_pct": float(under),
        "overreach_pct": float(over),
        "khat_cells": khat.count(),
        "viable_cells": qv.count(),
        "critical_cells": crit.count(),
    }


# --- run persistence --------------------------------------------------------

def _float_cols(prefix: str, dim: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(dim)]


def _write_csv(path, header, rows):
    directory = os.path.dirname(os.fspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    text_rows = [",".join(header)]
    text_rows += [",".join(row) for row in rows]
    atomic_write_text(path, "\n".join(text_rows) + "\n")


def write_run(record: RunRecord, out_dir):
    """Persist a run directory: run.json, samples.csv, estimates, trajectories."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    grid = record.khat_final.grid
    n, m = grid.state_dim, grid.action_dim

    header = ["episode", "step"] + _float_cols("state", n) + _float_cols("action", m) \
        + ["label", "feasible"]
    rows = [[str(s.episode), str(s.step)]
            + [repr(x) for x in s.state] + [repr(x) for x in s.action]
            + [repr(s.label), str(int(s.feasible))]
            for s in record.steps]
    _write_csv(os.path.join(out_dir, "samples.csv"), header, rows)

    run = {
        "schema_version": RUN_SCHEMA_VERSION,
        "model": record.model_name,
        "seed": record.seed,
        "config": record.config_echo,
        "episode_lengths": record.episode_lengths,
        "sample_count": record.sample_count,
        "failure_count": record.failure_count,
        "batch_hyperparameters": [h.to_dict() for h in record.batch_hypers],
        "metrics": record.metrics,
    }
    atomic_write_text(os.path.join(out_dir, "run.json"), json.dumps(run, indent=1))

    save_set(os.path.join(out_dir, "khat_initial.json"), record.khat_initial,
             metadata={"model": record.model_name})
    save_set(os.path.join(out_dir, "khat_final.json"), record.khat_final,
             metadata={"model": record.model_name})

    ep_dir = os.path.join(out_dir, "episodes")
    os.makedirs(ep_dir, exist_ok=True)
    traj_header = ["step"] + _float_cols("state", n) + _float_cols("nominal", m) \
        + _float_cols("action", m) + ["feasible", "label"]
    for episode in range(len(record.episode_lengths)):
        ep_steps = [s for s in record.steps if s.episode == episode]
        rows = [[str(s.step)] + [repr(x) for x in s.state] + [repr(x) for x in s.nominal]
                + [repr(x) for x in s.action] + [str(int(s.feasible)), repr(s.label)]
                for s in ep_steps]
        _write_csv(os.path.join(ep_dir, f"episode_{episode:03d}.csv"), traj_header, rows)


@dataclass
class StoredRun:
    run: dict
    khat_initial: QSet
    khat_final: QSet
    steps: list[StepLog]


def load_run(run_dir) -> StoredRun:
    """Reload a persisted run directory (inverse of :func:`write_run`)."""
    run_dir = os.fspath(run_dir)
    with open(os.path.join(run_dir, "run.json")) as handle:
        run = json.load(handle)
    if run.get("schema_version") != RUN_SCHEMA_VERSION:
        raise ValueError(f"unsupported run schema_version {run.get('schema_version')!r}")
    khat_initial = load_set(os.path.join(run_dir, "khat_initial.json"))
    khat_final = load_set(os.path.join(run_dir, "khat_final.json"))
    steps = []
    grid = khat_final.grid
    n, m = grid.state_dim, grid.action_dim
    with open(os.path.join(run_dir, "samples.csv"), newline="") as handle:
        for row in csv.DictReader(handle):
            steps.append(StepLog(
                episode=int(row["episode"]), step=int(row["step"]),
                state=tuple(float(row[f"state{k}"]) for k in range(n)),
                nominal=(), action=tuple(float(row[f"action{k}"]) for k in range(m)),
                feasible=bool(int(row["feasible"])), label=float(row["label"]),
            ))
    return StoredRun(run=run, khat_initial=khat_initial, khat_final=khat_final, steps=steps)


def record_from_stored(stored: StoredRun) -> RunRecord:
    """Rebuild a RunRecord view of a stored run (trajectory nominals omitted)."""
    return RunRecord(
        model_name=stored.run["model"],
        seed=stored.run["seed"],
        steps=stored.steps,
        episode_lengths=list(stored.run["episode_lengths"]),
        batch_hypers=[gp.GpHyperparams.from_dict(h) for h in stored.run["batch_hyperparameters"]],
        khat_initial=stored.khat_initial,
        khat_final=stored.khat_final,
        config_echo=dict(stored.run.get("config", {})),
        metrics=stored.run.get("metrics"),
    )
