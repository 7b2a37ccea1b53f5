"""Command-line entry point.

Verbs: ``ingest`` inspects a .tsf file, ``run`` executes one experiment
config, ``grid`` executes a grid config with optional process parallelism,
and ``report`` turns a consolidated results file into comparison tables.
Exit codes: 0 success, 1 experiment or data failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import load_experiment_config, load_grid_config
from .errors import ConfigurationError, LeadcastError
from .experiment import run, run_grid
from .report import report
from .tsf import DatasetPolicy, load_tsf

log = logging.getLogger("leadcast")


def _cmd_ingest(args) -> int:
    policy = DatasetPolicy(min_length=args.min_length,
                           missing_value_action=args.missing)
    meta, records = load_tsf(args.path, policy)
    lengths = np.array([r.values.size for r in records])
    print(f"dataset:    {meta.name}")
    print(f"frequency:  {meta.frequency}")
    if meta.horizon is not None:
        print(f"horizon:    {meta.horizon}")
    print(f"series:     {len(records)}")
    if len(records):
        print(f"lengths:    min {lengths.min()}  median "
              f"{int(np.median(lengths))}  max {lengths.max()}")
        total = int(lengths.sum())
        print(f"values:     {total}")
    return 0


def _cmd_run(args) -> int:
    spec, config_data_dir = load_experiment_config(args.config)
    data_dir = args.data_dir or config_data_dir
    metrics = run(spec, data_dir=data_dir, out_root=args.out)
    print(metrics.summary())
    print(f"artifacts: {args.out}/{spec.experiment_id()}")
    return 0


def _cmd_grid(args) -> int:
    grid, config_data_dir = load_grid_config(args.config)
    data_dir = args.data_dir or config_data_dir
    consolidated, failures = run_grid(
        grid, data_dir=data_dir, out_root=args.out,
        parallelism=args.parallel, resume=args.resume)
    print(f"results: {consolidated}")
    if failures:
        for experiment_id, error in sorted(failures.items()):
            print(f"FAILED {experiment_id}: {error}", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    paths = report(args.results, args.out)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leadcast",
        description="Global LSTM forecasting with leading-indicator covariates.")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="parse a .tsf file and summarize it")
    ingest.add_argument("path")
    ingest.add_argument("--missing", choices=("reject_series", "reject_file"),
                        default="reject_series",
                        help="what to do with series containing '?' values")
    ingest.add_argument("--min-length", type=int, default=1)
    ingest.set_defaults(func=_cmd_ingest)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--data-dir", default=None)
    run_p.add_argument("--out", default="runs")
    run_p.set_defaults(func=_cmd_run)

    grid = sub.add_parser("grid", help="run a grid config")
    grid.add_argument("config")
    grid.add_argument("--data-dir", default=None)
    grid.add_argument("--out", default="runs")
    grid.add_argument("--parallel", type=int, default=1)
    grid.add_argument("--resume", action=argparse.BooleanOptionalAction,
                      default=True,
                      help="skip cells whose results row already exists")
    grid.set_defaults(func=_cmd_grid)

    rep = sub.add_parser("report", help="build comparison tables from results")
    rep.add_argument("results")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (LeadcastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
