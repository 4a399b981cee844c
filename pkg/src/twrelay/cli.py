"""Command line entry point: ``twrelay run | dump-channels | oracle | solve``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from twrelay.channel import dump_channels_json, network_config_from_mapping, read_kv_file, realization
from twrelay.dual_solver import SolverOptions, history_csv, solve
from twrelay.harness import ExperimentSpec, emit_results, run_experiment


def _load(path) -> dict:
    try:
        return read_kv_file(path)
    except FileNotFoundError:
        raise SystemExit(f"config file not found: {path}")


def cmd_run(args) -> int:
    values = _load(args.config)
    if args.scheme:
        values["schemes"] = args.scheme
    if args.realizations is not None:
        values["num_realizations"] = str(args.realizations)
    if args.seed is not None:
        values["master_seed"] = str(args.seed)
    if args.power_sweep_db:
        values["rs_power_sweep_db"] = args.power_sweep_db
    if args.workers is not None:
        values["workers"] = str(args.workers)
    if args.fairness:
        values["fairness_mode"] = args.fairness
    spec = ExperimentSpec.from_mapping(values)
    out = args.out or spec.output_path
    result = run_experiment(spec)
    written = emit_results(result, out, include_timings=args.timings)
    for row in result.summary():
        print(f"{row['power_db']:6.1f} dB  {row['scheme']:<10s} "
              f"{row['mean_rate']:10.4f} +/- {row['stderr']:.4f}  (n={row['n']})")
    for path in written.values():
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_dump(args) -> int:
    config = network_config_from_mapping(_load(args.config))
    text = dump_channels_json(realization(config, args.seed))
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_oracle(args) -> int:
    from twrelay.oracle import exhaustive_solve

    values = _load(args.config)
    config = network_config_from_mapping(values)
    channels = realization(config, args.seed)
    best, allocation = exhaustive_solve(channels, config, grid_steps=args.grid_steps)
    report = solve(channels, config, SolverOptions.from_mapping(values))
    print(json.dumps({
        "seed": args.seed,
        "oracle_objective": best,
        "oracle_allocation": allocation.active_tuples,
        "proposed_primal": report.primal_value,
        "proposed_dual": report.dual_value,
        "proposed_allocation": report.allocation.active_tuples,
        "ratio": report.primal_value / best if best > 0 else None,
    }, indent=2))
    return 0


def cmd_solve(args) -> int:
    values = _load(args.config)
    config = network_config_from_mapping(values)
    if args.rs_power_db is not None:
        config = config.with_relay_power_db(args.rs_power_db)
    report = solve(realization(config, args.seed), config, SolverOptions.from_mapping(values))
    if args.history:
        Path(args.history).write_text(history_csv(report))
    print(json.dumps({
        "primal_value": report.primal_value,
        "dual_value": report.dual_value,
        "gap": report.gap,
        "iterations": report.iterations,
        "converged": report.converged,
        "allocation": report.allocation.active_tuples,
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twrelay", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo experiment over a relay power sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--scheme", help="comma separated subset of proposed,epa,rra,dual_bound")
    run.add_argument("--realizations", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--power-sweep-db", help="comma separated relay powers in dB")
    run.add_argument("--workers", type=int)
    run.add_argument("--fairness", choices=("fixed_weights", "proportional"))
    run.add_argument("--out", help="output directory")
    run.add_argument("--timings", action="store_true", help="also write timings.csv")
    run.set_defaults(func=cmd_run)

    dump = sub.add_parser("dump-channels", help="print one channel realization as JSON")
    dump.add_argument("--config", required=True)
    dump.add_argument("--seed", type=int, required=True)
    dump.add_argument("--out")
    dump.set_defaults(func=cmd_dump)

    oracle = sub.add_parser("oracle", help="exhaustive search on a tiny instance")
    oracle.add_argument("--config", required=True)
    oracle.add_argument("--seed", type=int, required=True)
    oracle.add_argument("--grid-steps", type=int, default=200)
    oracle.set_defaults(func=cmd_oracle)

    one = sub.add_parser("solve", help="solve one realization, optionally exporting the dual history")
    one.add_argument("--config", required=True)
    one.add_argument("--seed", type=int, required=True)
    one.add_argument("--rs-power-db", type=float)
    one.add_argument("--history", help="CSV path for the per-iteration log")
    one.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"twrelay: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
