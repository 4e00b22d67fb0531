"""Viability kernels, control constraints, and greedy safe-set learning on grids."""

__version__ = "0.1.0"

from .dynamics import (IntegrationError, StepOutcome, SystemModel, flow,
                       hovership_model, step, step_many)
from .lattice import (OUTSIDE, GridAxis, GridMismatchError, GridSpec, QSet,
                      SSet, load_set, save_set, set_from_dict, set_to_dict,
                      write_cells_csv)
from .viability import (FAILED, PruneRejection, ViabilityResult,
                        compute_viability, is_control_constraint, prune,
                        tabulate, viability_from_table)
from .policy import (AdmissibilityVerdict, AffinePolicy, NominalPolicy,
                     TablePolicy, UniformRandomPolicy, critical_set,
                     is_admissible, matches_optimal_policy, opt, opt_set,
                     optimal_policy, optimal_policy_graph, squared_distance,
                     stochastic_critical_set)
from .learner import (GpHyperparams, GpModel, IllConditionedError,
                      LearnerConfig, Sample, constraint_estimate, fit,
                      log_marginal_likelihood, observe, posterior,
                      posterior_many, seed_on_policy_graph,
                      update_hyperparameters)
from .experiment import (ExperimentConfig, RunRecord, StepLog,
                         UnrecoverableConstraintError, compute_metrics,
                         explore_action, load_run, run_episode,
                         run_experiment, write_run)
from .config import (Config, ConfigError, ConfigParseError, ConfigRangeError,
                     ConfigSchemaError, load_config, parse_config)

__all__ = [
    "AffinePolicy", "AdmissibilityVerdict", "Config", "ConfigError",
    "ConfigParseError", "ConfigRangeError", "ConfigSchemaError",
    "ExperimentConfig", "FAILED", "GpHyperparams", "GpModel", "GridAxis",
    "GridMismatchError", "GridSpec", "IllConditionedError",
    "IntegrationError", "LearnerConfig", "NominalPolicy", "OUTSIDE",
    "PruneRejection", "QSet", "RunRecord", "SSet", "Sample", "StepLog",
    "StepOutcome", "SystemModel", "TablePolicy", "UniformRandomPolicy",
    "UnrecoverableConstraintError", "ViabilityResult", "compute_metrics",
    "compute_viability", "constraint_estimate", "critical_set",
    "explore_action", "fit", "flow", "hovership_model", "is_admissible",
    "is_control_constraint", "load_config", "load_run", "load_set",
    "log_marginal_likelihood", "matches_optimal_policy", "observe", "opt",
    "opt_set", "optimal_policy", "optimal_policy_graph", "parse_config",
    "posterior", "posterior_many", "prune", "run_episode", "run_experiment",
    "save_set", "seed_on_policy_graph", "set_from_dict", "set_to_dict",
    "squared_distance", "step", "step_many", "stochastic_critical_set",
    "tabulate", "update_hyperparameters", "viability_from_table",
    "write_cells_csv", "write_run",
]
