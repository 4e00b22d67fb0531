"""Gaussian-process estimate of the constraint set.

Transitions are labeled 1 (survived) or 0 (failed) and regressed with an
exact GP using a squared-exponential kernel with per-dimension
lengthscales.  The constraint estimate is the grid superlevel set of the
posterior mean.  Models are immutable values: observing a sample or
updating hyperparameters returns a new model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .dynamics import StepOutcome
from .lattice import GridSpec, QSet

JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class IllConditionedError(RuntimeError):
    """Kernel matrix stayed indefinite through the whole jitter ladder."""


@dataclass(frozen=True)
class GpHyperparams:
    """Squared-exponential kernel parameters plus a constant prior mean."""

    lengthscales: tuple[float, ...]
    signal_variance: float = 1.0
    noise_variance: float = 1e-4
    prior_mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(l) for l in self.lengthscales))
        if any(l <= 0 for l in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        if self.signal_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("variances must be positive")

    def to_dict(self) -> dict:
        return {
            "lengthscales": list(self.lengthscales),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "prior_mean": self.prior_mean,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GpHyperparams":
        return cls(tuple(d["lengthscales"]), d["signal_variance"],
                   d["noise_variance"], d["prior_mean"])


@dataclass(frozen=True)
class Sample:
    """One labeled transition: 1.0 survived, 0.0 failed."""

    state: tuple[float, ...]
    action: tuple[float, ...]
    label: float

    def __post_init__(self):
        object.__setattr__(self, "state", tuple(float(x) for x in self.state))
        object.__setattr__(self, "action", tuple(float(x) for x in self.action))
        if self.label not in (0.0, 1.0):
            raise ValueError("labels are binary: 0 failed, 1 survived")

    @property
    def point(self) -> tuple[float, ...]:
        return self.state + self.action


def _scaled(X: np.ndarray, lengthscales) -> np.ndarray:
    return X / np.asarray(lengthscales, dtype=float)[np.newaxis, :]


def _kernel(hyper: GpHyperparams, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = cdist(_scaled(A, hyper.lengthscales), _scaled(B, hyper.lengthscales), "sqeuclidean")
    return hyper.signal_variance * np.exp(-0.5 * d2)


@dataclass(frozen=True)
class GpModel:
    """Fitted exact GP: samples, hyperparameters, cached Cholesky factor."""

    hyper: GpHyperparams
    samples: tuple[Sample, ...]
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    chol: tuple | None = field(repr=False)
    alpha: np.ndarray | None = field(repr=False)
    jitter: float

    @property
    def sample_count(self) -> int:
        return len(self.samples)


def fit(samples, hyper: GpHyperparams) -> GpModel:
    """Exact GP regression; with no samples the model is the prior."""
    samples = tuple(samples)
    if not samples:
        d = len(hyper.lengthscales)
        return GpModel(hyper, samples, np.empty((0, d)), np.empty(0), None, None, 0.0)
    X = np.array([s.point for s in samples], dtype=float)
    if X.shape[1] != len(hyper.lengthscales):
        raise ValueError("sample dimension does not match lengthscales")
    y = np.array([s.label for s in samples], dtype=float)
    K = _kernel(hyper, X, X)
    last_error: Exception | None = None
    for jitter in JITTER_LADDER:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                chol = cho_factor(K + (hyper.noise_variance + jitter) * np.eye(len(y)), lower=True)
            break
        except (np.linalg.LinAlgError, Warning) as err:
            last_error = err
    else:
        raise IllConditionedError(f"kernel matrix not positive definite: {last_error}")
    alpha = cho_solve(chol, y - hyper.prior_mean)
    return GpModel(hyper, samples, X, y, chol, alpha, jitter)


def observe(model: GpModel, s, a, outcome: StepOutcome) -> GpModel:
    """Append the labeled transition and refit (0 on failure, 1 on survival)."""
    label = 0.0 if outcome.failed else 1.0
    sample = Sample(tuple(np.asarray(s, dtype=float).reshape(-1)),
                    tuple(np.asarray(a, dtype=float).reshape(-1)), label)
    return fit(model.samples + (sample,), model.hyper)


def posterior_many(model: GpModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance at the query points, shape (k, d)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    hyper = model.hyper
    if model.chol is None:
        mean = np.full(points.shape[0], hyper.prior_mean)
        var = np.full(points.shape[0], hyper.signal_variance)
        return mean, var
    ks = _kernel(hyper, points, model.X)
    mean = hyper.prior_mean + ks @ model.alpha
    v = cho_solve(model.chol, ks.T)
    var = hyper.signal_variance - np.einsum("ij,ji->i", ks, v)
    return mean, np.maximum(var, 0.0)


def posterior_mean_many(model: GpModel, points: np.ndarray) -> np.ndarray:
    """Posterior mean only; skips the variance solve."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if model.chol is None:
        return np.full(points.shape[0], model.hyper.prior_mean)
    return model.hyper.prior_mean + _kernel(model.hyper, points, model.X) @ model.alpha


def posterior(model: GpModel, s, a) -> tuple[float, float]:
    """Posterior (mean, variance) at one state-action point."""
    x = np.concatenate([np.asarray(s, dtype=float).reshape(-1),
                        np.asarray(a, dtype=float).reshape(-1)])
    mean, var = posterior_many(model, x[np.newaxis, :])
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(model: GpModel) -> float:
    """Exact log evidence of the fitted data under the model's kernel."""
    if model.chol is None:
        return 0.0
    r = model.y - model.hyper.prior_mean
    L = model.chol[0]
    return float(-0.5 * r @ model.alpha - np.sum(np.log(np.diag(L)))
                 - 0.5 * len(r) * np.log(2.0 * np.pi))


def update_hyperparameters(model: GpModel, search_grid) -> GpModel:
    """Refit with the search-grid candidate of highest log marginal likelihood.

    Ties keep the first-listed candidate.  If every candidate is
    ill-conditioned the model is returned unchanged with a warning.
    """
    if model.sample_count < 2:
        raise ValueError("hyperparameter update needs at least 2 samples")
    best: GpModel | None = None
    best_lml = -np.inf
    for hyper in search_grid:
        try:
            candidate = fit(model.samples, hyper)
        except IllConditionedError:
            continue
        lml = log_marginal_likelihood(candidate)
        if lml > best_lml:
            best, best_lml = candidate, lml
    if best is None:
        warnings.warn("all hyperparameter candidates ill-conditioned; keeping current")
        return model
    return best


def grid_points(grid: GridSpec) -> np.ndarray:
    """All (state, action) pairs of the grid, C-ordered, shape (S*A, n+m)."""
    sv = grid.state_values()
    av = grid.action_values()
    return np.hstack([np.repeat(sv, av.shape[0], axis=0), np.tile(av, (sv.shape[0], 1))])


def constraint_estimate(model: GpModel, grid: GridSpec, threshold: float) -> QSet:
    """Superlevel set of the posterior mean on the grid: mean >= threshold."""
    means = posterior_mean_many(model, grid_points(grid))
    return QSet(grid, (means >= threshold).reshape(grid.state_count, grid.action_count))


@dataclass(frozen=True)
class LearnerConfig:
    """Initialization and update policy for the constraint learner."""

    threshold: float
    seed_region: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    hyper: GpHyperparams
    search_grid: tuple[GpHyperparams, ...]
    refit: str = "sample"  # or "episode"

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if not self.seed_region:
            raise ValueError("seed_region must not be empty")
        if self.refit not in ("sample", "episode"):
            raise ValueError("refit must be 'sample' or 'episode'")

    def seed_samples(self) -> tuple[Sample, ...]:
        return tuple(Sample(s, a, 1.0) for s, a in self.seed_region)


def seed_on_policy_graph(policy, operating_point, half_width: float = 0.1,
                         count: int = 5) -> tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]:
    """Label-1 seed pairs along a deterministic policy graph around an operating point."""
    op = np.asarray(operating_point, dtype=float).reshape(-1)
    offsets = np.linspace(-half_width, half_width, count)
    region = []
    for delta in offsets:
        s = op + delta
        a = np.asarray(policy.nominal_action(s), dtype=float).reshape(-1)
        region.append((tuple(float(x) for x in s), tuple(float(x) for x in a)))
    return tuple(region)
