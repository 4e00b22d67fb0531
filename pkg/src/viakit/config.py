"""JSON configuration ingestion.

Configs are strictly validated: unknown keys are rejected with the
offending path, type errors raise schema errors, and out-of-range values
raise range errors, so the CLI can map each to a distinct exit code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import dynamics, learner
from .experiment import ExperimentConfig
from .lattice import GridSpec
from .policy import AffinePolicy, NominalPolicy, TablePolicy, UniformRandomPolicy

CONFIG_SCHEMA_VERSION = 1

DEFAULT_STATE_POINTS = 201
DEFAULT_ACTION_POINTS = 161


class ConfigError(Exception):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigSchemaError(ConfigError):
    pass


class ConfigRangeError(ConfigError):
    pass


@dataclass
class Config:
    raw: dict
    model: dynamics.SystemModel
    grid: GridSpec
    policy: NominalPolicy
    learner: learner.LearnerConfig
    experiment: ExperimentConfig
    output_dir: str


def _check_keys(d: dict, allowed, path: str):
    for key in d:
        if key not in allowed:
            raise ConfigSchemaError(f"unknown key at {path}.{key}")


def _get(d: dict, key: str, default, path: str, kind, required=False):
    if key not in d:
        if required:
            raise ConfigSchemaError(f"missing key {path}.{key}")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigSchemaError(f"wrong type at {path}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _positive(value, path: str):
    if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
        raise ConfigRangeError(f"value at {path} must be positive and finite")
    return value


def _count(value, path: str, minimum=1):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigRangeError(f"value at {path} must be an integer >= {minimum}")
    return value


def _box(value, path: str) -> np.ndarray:
    try:
        box = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigSchemaError(f"wrong type at {path}: expected [[lower, upper], ...]")
    if box.ndim != 2 or box.shape[1] != 2:
        raise ConfigSchemaError(f"wrong shape at {path}: expected [[lower, upper], ...]")
    if not np.all(np.isfinite(box)) or not np.all(box[:, 0] < box[:, 1]):
        raise ConfigRangeError(f"bounds at {path} must be finite with lower < upper")
    return box


def _build_model(spec, path: str) -> dynamics.SystemModel:
    if isinstance(spec, str):
        if spec != "hovership":
            raise ConfigSchemaError(f"unknown builtin model at {path}: {spec!r}")
        return dynamics.hovership_model()
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected name or object")
    _check_keys(spec, {"name", "vector_field", "state_box", "action_box",
                       "hold_duration", "substep", "failure"}, path)
    name = _get(spec, "name", None, path, str, required=True)
    field_name = _get(spec, "vector_field", None, path, str, required=True)
    if field_name not in dynamics.VECTOR_FIELDS:
        raise ConfigSchemaError(f"unknown vector field at {path}.vector_field: {field_name!r}")
    failure = _get(spec, "failure", "outside_state_box", path, str)
    if failure not in dynamics.FAILURE_SPECS:
        raise ConfigSchemaError(f"unknown failure spec at {path}.failure: {failure!r}")
    hold = _positive(_get(spec, "hold_duration", 1.0, path, float), f"{path}.hold_duration")
    substep = _positive(_get(spec, "substep", 0.01, path, float), f"{path}.substep")
    state_box = _box(_get(spec, "state_box", None, path, list, required=True), f"{path}.state_box")
    action_box = _box(_get(spec, "action_box", None, path, list, required=True), f"{path}.action_box")
    try:
        return dynamics.build_model(name, state_box=state_box, action_box=action_box,
                                    vector_field=field_name, hold_duration=hold,
                                    substep=substep, failure=failure)
    except ValueError as err:
        raise ConfigRangeError(f"invalid model at {path}: {err}")


def _build_grid(spec, model: dynamics.SystemModel, path: str) -> GridSpec:
    spec = spec if spec is not None else {}
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected object")
    _check_keys(spec, {"state_points", "action_points"}, path)

    def points(key, default, dims):
        value = spec.get(key, default)
        if isinstance(value, int) and not isinstance(value, bool):
            value = [value] * dims
        if not (isinstance(value, list) and len(value) == dims):
            raise ConfigSchemaError(f"wrong type at {path}.{key}: expected int or list of {dims}")
        return [_count(v, f"{path}.{key}", minimum=2) for v in value]

    return GridSpec.from_boxes(model.state_box, model.action_box,
                               points("state_points", DEFAULT_STATE_POINTS, model.state_dim),
                               points("action_points", DEFAULT_ACTION_POINTS, model.action_dim))


def _build_policy(spec, model: dynamics.SystemModel, grid: GridSpec, path: str) -> NominalPolicy:
    if spec is None:
        if model.name == "hovership":
            return AffinePolicy([[-0.3]], [0.7], model.action_box)
        raise ConfigSchemaError(f"missing key {path} (no default policy for {model.name!r})")
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected object")
    kind = _get(spec, "kind", None, path, str, required=True)
    if kind == "affine":
        _check_keys(spec, {"kind", "gain", "offset"}, path)
        gain = _get(spec, "gain", None, path, list, required=True)
        offset = _get(spec, "offset", None, path, list, required=True)
        try:
            return AffinePolicy(gain, offset, model.action_box)
        except (TypeError, ValueError) as err:
            raise ConfigSchemaError(f"invalid affine policy at {path}: {err}")
    if kind == "uniform":
        _check_keys(spec, {"kind", "seed"}, path)
        seed = spec.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise ConfigSchemaError(f"wrong type at {path}.seed: expected int or null")
        return UniformRandomPolicy(model.action_box, seed=seed)
    if kind == "table":
        _check_keys(spec, {"kind", "actions"}, path)
        actions = _get(spec, "actions", None, path, list, required=True)
        try:
            return TablePolicy(grid, actions)
        except (TypeError, ValueError) as err:
            raise ConfigSchemaError(f"invalid table policy at {path}: {err}")
    raise ConfigSchemaError(f"unknown policy kind at {path}.kind: {kind!r}")


def default_search_grid(state_dim: int, action_dim: int,
                        prior_mean: float = 0.0) -> tuple[learner.GpHyperparams, ...]:
    """Finite hyperparameter candidates for the per-batch evidence search.

    Scales start at the seed-cluster extent so the search trades smoothness
    against noise rather than chasing interpolation below the sample spacing;
    the larger noise level lets isolated failure labels be absorbed instead
    of forcing a sharp fit.
    """
    candidates = []
    for ls_s, ls_a in ((0.4, 0.15), (0.8, 0.2), (1.2, 0.25)):
        for noise in (1e-4, 1e-2):
            candidates.append(learner.GpHyperparams(
                lengthscales=(ls_s,) * state_dim + (ls_a,) * action_dim,
                signal_variance=1.0, noise_variance=noise, prior_mean=prior_mean))
    return tuple(candidates)


def _seed_region(spec, policy: NominalPolicy, model: dynamics.SystemModel, path: str):
    if isinstance(spec, list):
        region = []
        for k, pair in enumerate(spec):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigSchemaError(f"wrong shape at {path}[{k}]: expected [state, action]")
            s, a = (np.asarray(x, dtype=float).reshape(-1) for x in pair)
            if s.size != model.state_dim or a.size != model.action_dim:
                raise ConfigSchemaError(f"wrong dimensions at {path}[{k}]")
            region.append((tuple(s), tuple(a)))
        if not region:
            raise ConfigRangeError(f"seed region at {path} must not be empty")
        return tuple(region)
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected list or object")
    _check_keys(spec, {"operating_point", "half_width", "count"}, path)
    op = np.asarray(_get(spec, "operating_point", None, path, list, required=True), dtype=float)
    half_width = _positive(_get(spec, "half_width", 0.1, path, float), f"{path}.half_width")
    count = _count(_get(spec, "count", 5, path, int), f"{path}.count")
    if policy.deterministic:
        return learner.seed_on_policy_graph(policy, op, half_width, count)
    # stochastic nominal: anchor the seeds at the action-box midpoint
    mid = model.action_box.mean(axis=1)
    states = np.linspace(-half_width, half_width, count)
    return tuple((tuple(op + d), tuple(mid)) for d in states)


def _build_learner(spec, policy: NominalPolicy, model: dynamics.SystemModel,
                   path: str) -> learner.LearnerConfig:
    spec = spec if spec is not None else {}
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected object")
    _check_keys(spec, {"threshold", "lengthscales", "signal_variance", "noise_variance",
                       "prior_mean", "seed_region", "search_grid", "refit"}, path)
    threshold = _get(spec, "threshold", 0.5, path, float)
    if not 0.0 < threshold < 1.0:
        raise ConfigRangeError(f"value at {path}.threshold must lie strictly in (0, 1)")
    n, m = model.state_dim, model.action_dim
    lengthscales = _get(spec, "lengthscales", [0.2] * n + [0.1] * m, path, list)
    if len(lengthscales) != n + m:
        raise ConfigSchemaError(f"wrong length at {path}.lengthscales: expected {n + m}")
    signal = _positive(_get(spec, "signal_variance", 1.0, path, float), f"{path}.signal_variance")
    noise = _positive(_get(spec, "noise_variance", 1e-4, path, float), f"{path}.noise_variance")
    prior_mean = _get(spec, "prior_mean", 0.0, path, float)
    try:
        hyper = learner.GpHyperparams(tuple(float(l) for l in lengthscales), signal, noise, prior_mean)
    except (TypeError, ValueError) as err:
        raise ConfigRangeError(f"invalid hyperparameters at {path}: {err}")

    if "search_grid" in spec:
        entries = _get(spec, "search_grid", None, path, list, required=True)
        search = []
        for k, entry in enumerate(entries):
            if not isinstance(entry, dict):
                raise ConfigSchemaError(f"wrong type at {path}.search_grid[{k}]")
            _check_keys(entry, {"lengthscales", "signal_variance", "noise_variance"},
                        f"{path}.search_grid[{k}]")
            try:
                search.append(learner.GpHyperparams(
                    tuple(float(l) for l in entry["lengthscales"]),
                    float(entry.get("signal_variance", signal)),
                    float(entry.get("noise_variance", noise)),
                    prior_mean))
            except (KeyError, TypeError, ValueError) as err:
                raise ConfigSchemaError(f"invalid entry at {path}.search_grid[{k}]: {err}")
        search = tuple(search)
    else:
        search = default_search_grid(n, m, prior_mean)

    default_region = {"operating_point": list(np.asarray(model.state_box).mean(axis=1))}
    region = _seed_region(spec.get("seed_region", default_region), policy, model,
                          f"{path}.seed_region")
    refit = _get(spec, "refit", "sample", path, str)
    if refit not in ("sample", "episode"):
        raise ConfigSchemaError(f"unknown refit mode at {path}.refit: {refit!r}")
    return learner.LearnerConfig(threshold=threshold, seed_region=region, hyper=hyper,
                                 search_grid=search, refit=refit)


def _build_experiment(spec, path: str) -> dict:
    spec = spec if spec is not None else {}
    if not isinstance(spec, dict):
        raise ConfigSchemaError(f"wrong type at {path}: expected object")
    _check_keys(spec, {"batch_count", "episodes_per_batch", "max_steps", "seed",
                       "fallback", "conservative_membership"}, path)
    out = {
        "batch_count": _count(_get(spec, "batch_count", 2, path, int), f"{path}.batch_count"),
        "episodes_per_batch": _count(_get(spec, "episodes_per_batch", 10, path, int),
                                     f"{path}.episodes_per_batch"),
        "max_steps_per_episode": _count(_get(spec, "max_steps", 10, path, int), f"{path}.max_steps"),
        "seed": _get(spec, "seed", 0, path, int),
        "fallback": _get(spec, "fallback", "nominal", path, str),
        "conservative_membership": _get(spec, "conservative_membership", False, path, bool),
    }
    if out["fallback"] not in ("nominal", "uniform"):
        raise ConfigSchemaError(f"unknown fallback at {path}.fallback: {out['fallback']!r}")
    return out


def parse_config(raw: dict) -> Config:
    """Validate a parsed JSON document and assemble the runtime objects."""
    if not isinstance(raw, dict):
        raise ConfigSchemaError("top-level config must be an object")
    _check_keys(raw, {"schema_version", "model", "grid", "policy", "learner",
                      "experiment", "output_dir"}, "config")
    version = _get(raw, "schema_version", CONFIG_SCHEMA_VERSION, "config", int)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigSchemaError(f"unsupported schema_version {version}")
    if "model" not in raw:
        raise ConfigSchemaError("missing key config.model")
    model = _build_model(raw["model"], "config.model")
    grid = _build_grid(raw.get("grid"), model, "config.grid")
    policy = _build_policy(raw.get("policy"), model, grid, "config.policy")
    learner_cfg = _build_learner(raw.get("learner"), policy, model, "config.learner")
    exp = _build_experiment(raw.get("experiment"), "config.experiment")
    output_dir = _get(raw, "output_dir", f"runs/{model.name}", "config", str)
    experiment = ExperimentConfig(model=model, grid=grid, policy=policy,
                                  learner=learner_cfg, config_echo=raw, **exp)
    return Config(raw=raw, model=model, grid=grid, policy=policy,
                  learner=learner_cfg, experiment=experiment, output_dir=output_dir)


def load_config(path) -> Config:
    """Load, validate, and assemble a config file."""
    with open(path) as handle:
        text = handle.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigParseError(f"invalid JSON in {path}: {err}")
    return parse_config(raw)


def apply_overrides(config: Config, seed: int | None = None, out: str | None = None,
                    conservative: bool | None = None) -> Config:
    """Return a config with CLI overrides applied (echo updated to match)."""
    raw = json.loads(json.dumps(config.raw))
    experiment = config.experiment
    if seed is not None:
        raw.setdefault("experiment", {})["seed"] = seed
        experiment = replace(experiment, seed=seed)
    if conservative is not None:
        raw.setdefault("experiment", {})["conservative_membership"] = conservative
        experiment = replace(experiment, conservative_membership=conservative)
    output_dir = out if out is not None else config.output_dir
    if out is not None:
        raw["output_dir"] = out
    experiment = replace(experiment, config_echo=raw)
    return Config(raw=raw, model=config.model, grid=config.grid, policy=config.policy,
                  learner=config.learner, experiment=experiment, output_dir=output_dir)
