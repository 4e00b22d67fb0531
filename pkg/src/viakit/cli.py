"""Command-line entry point.

Subcommands: ``viability``, ``critical``, ``learn``, ``evaluate``.  Every
error path exits nonzero with a single machine-parsable line on stderr of
the form ``error: <kind>: <detail>``; parse, schema, and range violations
in the config map to distinct exit codes.  Set ``VIAKIT_LOG`` to a level
name (e.g. ``debug``) for diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import (Config, ConfigParseError, ConfigRangeError, ConfigSchemaError,
                     apply_overrides, load_config)
from .experiment import (compute_metrics, load_run, record_from_stored,
                         run_experiment, write_run)
from .lattice import atomic_write_text, save_set, write_cells_csv
from .policy import critical_set, is_admissible, optimal_policy, stochastic_critical_set
from .viability import compute_viability

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SCHEMA = 3
EXIT_RANGE = 4
EXIT_RUNTIME = 5

log = logging.getLogger("viakit")


class CliError(RuntimeError):
    def __init__(self, kind: str, detail: str, code: int):
        super().__init__(detail)
        self.kind = kind
        self.code = code


def _metadata(config: Config, oracle) -> dict:
    return {"model": config.model.name, "iterations": oracle.iterations}


def cmd_viability(config: Config, out_dir: str) -> dict:
    """Compute the viability kernel/viable set and write them to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    oracle = compute_viability(config.model, config.grid)
    meta = _metadata(config, oracle)
    save_set(os.path.join(out_dir, "q_viable.json"), oracle.viable, metadata=meta)
    save_set(os.path.join(out_dir, "s_kernel.json"), oracle.kernel, metadata=meta)
    write_cells_csv(os.path.join(out_dir, "viability.csv"), oracle.viable)
    summary = {"viable_cells": oracle.viable.count(), "kernel_cells": oracle.kernel.count(),
               "iterations": oracle.iterations}
    log.info("viability: %s", summary)
    return summary


def cmd_critical(config: Config, out_dir: str) -> dict:
    """Compute the critical set (and the optimal table, when deterministic)."""
    os.makedirs(out_dir, exist_ok=True)
    oracle = compute_viability(config.model, config.grid)
    meta = _metadata(config, oracle)
    if config.policy.deterministic:
        crit = critical_set(oracle, config.policy)
        table = optimal_policy(oracle.viable, config.policy)
        av = config.grid.action_values()
        sv = config.grid.state_values()
        rows = ["state_cell," + ",".join(f"state{k}" for k in range(config.grid.state_dim))
                + ",action_cell," + ",".join(f"action{k}" for k in range(config.grid.action_dim))]
        for i, j in sorted(table.items()):
            rows.append(f"{i}," + ",".join(repr(float(x)) for x in sv[i])
                        + f",{j}," + ",".join(repr(float(x)) for x in av[j]))
        atomic_write_text(os.path.join(out_dir, "opt_table.csv"), "\n".join(rows) + "\n")
    else:
        crit = stochastic_critical_set(oracle)
    save_set(os.path.join(out_dir, "q_critical.json"), crit, metadata=meta)
    write_cells_csv(os.path.join(out_dir, "q_critical.csv"), crit)
    summary = {"critical_cells": crit.count(), "viable_cells": oracle.viable.count()}
    log.info("critical: %s", summary)
    return summary


def cmd_learn(config: Config, out_dir: str) -> dict:
    """Run the exploration experiment, score it against the oracle, persist it."""
    oracle = compute_viability(config.model, config.grid)
    record = run_experiment(config.experiment)
    record.metrics = compute_metrics(record, oracle, config.policy)
    write_run(record, out_dir)
    log.info("learn: %s", record.metrics)
    return record.metrics


def cmd_evaluate(run_dir: str, config: Config, out_path: str | None = None) -> dict:
    """Re-score a stored run against a fresh oracle and check admissibility.

    When the final estimate is admissible, the constrained policy must match
    the optimum exactly (zero deviation for a deterministic nominal policy,
    zero underestimate for a stochastic one); a violation is an error.
    """
    stored = load_run(run_dir)
    record = record_from_stored(stored)
    if record.khat_final.grid != config.grid:
        raise CliError("runtime", "stored run and config use different grids", EXIT_RUNTIME)
    oracle = compute_viability(config.model, config.grid)
    metrics = compute_metrics(record, oracle, config.policy)
    verdict = is_admissible(record.khat_final, oracle, config.policy)
    report = {
        "metrics": metrics,
        "admissible": verdict.admissible,
        "missing_optimal_cells": len(verdict.missing_optimal),
        "critical_overlap_cells": len(verdict.critical_overlap),
    }
    if verdict.admissible:
        if config.policy.deterministic:
            exact = metrics["deviation_mean_pct"] == 0.0 and metrics["deviation_max_pct"] == 0.0
        else:
            exact = metrics["underestimate_pct"] == 0.0
        report["greedy_sufficiency_ok"] = exact
        if not exact:
            atomic_write_text(out_path or os.path.join(run_dir, "evaluate.json"),
                              json.dumps(report, indent=1))
            raise CliError("runtime", "admissible estimate with nonzero policy deviation",
                           EXIT_RUNTIME)
    atomic_write_text(out_path or os.path.join(run_dir, "evaluate.json"),
                      json.dumps(report, indent=1))
    return report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viakit",
                                     description="Viability sets and constraint learning on grids")
    parser.add_argument("--version", action="version", version=f"viakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seed=False):
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--conservative-membership", action="store_true", default=None,
                       help="require all enclosing grid cells for continuous membership")
        if with_seed:
            p.add_argument("--seed", type=int, default=None, help="experiment seed override")

    common(sub.add_parser("viability", help="compute the viability kernel and viable set"))
    common(sub.add_parser("critical", help="compute the critical set for the nominal policy"))
    common(sub.add_parser("learn", help="run the constraint-learning experiment"), with_seed=True)
    evaluate = sub.add_parser("evaluate", help="re-score a stored run")
    evaluate.add_argument("run_dir", help="run directory written by `learn`")
    common(evaluate)
    return parser


def _load(args) -> Config:
    try:
        config = load_config(args.config)
    except FileNotFoundError as err:
        raise CliError("runtime", f"config file not found: {err.filename}", EXIT_RUNTIME)
    except ConfigParseError as err:
        raise CliError("parse", str(err), EXIT_PARSE)
    except ConfigSchemaError as err:
        raise CliError("schema", str(err), EXIT_SCHEMA)
    except ConfigRangeError as err:
        raise CliError("range", str(err), EXIT_RANGE)
    return apply_overrides(config, seed=getattr(args, "seed", None), out=args.out,
                           conservative=args.conservative_membership)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VIAKIT_LOG", "warning").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        config = _load(args)
        out_dir = config.output_dir
        if args.command == "viability":
            summary = cmd_viability(config, out_dir)
        elif args.command == "critical":
            summary = cmd_critical(config, out_dir)
        elif args.command == "learn":
            summary = cmd_learn(config, out_dir)
        elif args.command == "evaluate":
            summary = cmd_evaluate(args.run_dir, config,
                                   out_path=None if args.out is None
                                   else os.path.join(args.out, "evaluate.json"))
        else:  # pragma: no cover - argparse enforces the choices
            raise CliError("runtime", f"unknown command {args.command}", EXIT_RUNTIME)
    except CliError as err:
        print(f"error: {err.kind}: {err}".replace("\n", " "), file=sys.stderr)
        return err.code
    except FileNotFoundError as err:
        print(f"error: runtime: missing file {err.filename}".replace("\n", " "), file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as err:  # keep every failure single-line and typed
        print(f"error: runtime: {err}".replace("\n", " "), file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"command": args.command, "out": out_dir, "result": summary}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
