"""Command-line experiment runner.

Subcommands: run, sweep, validate, presets.  Exit codes: 0 success,
1 configuration error, 2 runtime fault, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .checks import CHECKS, run_checks
from .config import SWEEPABLE, ExperimentConfig
from .errors import ConfigurationError, SimulationFault
from .presets import PRESETS, preset
from .runner import run_experiment, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2
EXIT_VALIDATION = 3


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigurationError("give either --config or --preset, not both")
    if args.config:
        config = ExperimentConfig.from_yaml(args.config)
    elif args.preset:
        config = ExperimentConfig.from_dict(preset(args.preset))
    else:
        raise ConfigurationError("need --config PATH or --preset NAME")
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.out is not None:
        overrides["output"] = args.out
    if getattr(args, "parallel", None) is not None:
        overrides["parallel"] = args.parallel
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def _cmd_run(args) -> int:
    config = _load_config(args)
    result = run_experiment(config)
    print(f"wrote {len(result['summary'])} run(s) to {result['out_dir']}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    if args.param not in SWEEPABLE:
        raise ConfigurationError(
            f"unknown sweep parameter {args.param!r}; choose from {SWEEPABLE}"
        )
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    if not values:
        raise ConfigurationError("sweep needs a non-empty comma-separated value list")
    result = run_sweep(config, args.param, values)
    print(f"wrote {len(result['summary'])} sweep row(s) to {result['out_dir']}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    names = args.checks.split(",") if args.checks else None
    results = run_checks(names)
    failed = False
    for result in results:
        print(f"{result.line()}  ({result.elapsed:.1f}s)")
        if args.verbose:
            print("  " + json.dumps(result.details, default=str))
        if not result.passed:
            failed = True
    return EXIT_VALIDATION if failed else EXIT_OK


def _cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetsched",
        description="Heterogeneous-cluster scheduling simulator and validator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("--config", help="YAML experiment config")
    p_run.add_argument("--preset", help="named preset (see `presets list`)")
    p_run.add_argument("--seed", type=int, help="override: run a single seed")
    p_run.add_argument("--out", help="override output directory")
    p_run.add_argument("--parallel", type=int, help="parallel run degree")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter over values")
    p_sweep.add_argument("--config", help="YAML experiment config")
    p_sweep.add_argument("--preset", help="named preset")
    p_sweep.add_argument("--param", required=True, help=f"one of {SWEEPABLE}")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seed", type=int, help="override: run a single seed")
    p_sweep.add_argument("--out", help="override output directory")
    p_sweep.add_argument("--parallel", type=int, help="parallel run degree")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="run oracle acceptance checks")
    p_val.add_argument(
        "--checks",
        help=f"comma-separated check names (default: all of {', '.join(sorted(CHECKS))})",
    )
    p_val.add_argument("--verbose", action="store_true", help="print details")
    p_val.set_defaults(func=_cmd_validate)

    p_presets = sub.add_parser("presets", help="preset utilities")
    presets_sub = p_presets.add_subparsers(dest="presets_command", required=True)
    p_list = presets_sub.add_parser("list", help="list preset names")
    p_list.set_defaults(func=_cmd_presets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        # unreadable config or unwritable output directory
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
