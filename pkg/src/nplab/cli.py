"""Command line interface.

Subcommands: run <config.json>, suite hierarchy, list, describe <id>.
Seed precedence: --seed flag > NPLAB_SEED environment variable > config.
Exit codes: 0 all pass, 1 any failure, 2 usage error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import ContractError, NumericError, UsageError
from .lab import (REGISTRY, ExperimentConfig, hierarchy_configs,
                  parse_config_file, run_suite, write_reports)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nplab",
        description="Numerical verification lab for context-conditioned "
                    "predictor architectures.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=None,
                       help="directory for JSON/CSV reports")
        p.add_argument("--seed", type=int, default=None,
                       help="override every experiment seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel experiment workers")
        p.add_argument("--format", choices=["json", "csv", "both"],
                       default="both", help="report formats to write")

    p_run = sub.add_parser("run", help="run experiments from a JSON config")
    p_run.add_argument("config", help="path to the config JSON document")
    add_common(p_run)

    p_suite = sub.add_parser("suite", help="run a named experiment suite")
    p_suite.add_argument("name", help="suite name (hierarchy)")
    add_common(p_suite)

    sub.add_parser("list", help="list registered experiments")

    p_desc = sub.add_parser("describe", help="describe one experiment")
    p_desc.add_argument("experiment_id")

    return parser


def _resolve_seed(flag_seed):
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("NPLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as err:
            raise UsageError(f"NPLAB_SEED must be an integer, got {env!r}") \
                from err
    return None


def _apply_seed(configs, seed):
    if seed is None:
        return configs
    return [replace(c, seed=seed) for c in configs]


def _execute(configs, args) -> int:
    result = run_suite(configs, jobs=max(1, args.jobs))
    for report in result["reports"]:
        status = "FAIL" if report.failed else "pass"
        line = f"{status}  {report.experiment_id}"
        if report.error:
            line += f"  ({report.error})"
        print(line)
    if args.out:
        paths = write_reports(result["reports"], args.out, fmt=args.format)
        print(f"wrote {len(paths)} report file(s) to {args.out}")
    print("overall:", "pass" if result["overall_pass"] else "fail")
    return EXIT_PASS if result["overall_pass"] else EXIT_FAIL


def _cmd_run(args) -> int:
    configs = parse_config_file(args.config)
    configs = _apply_seed(configs, _resolve_seed(args.seed))
    return _execute(configs, args)


def _cmd_suite(args) -> int:
    if args.name != "hierarchy":
        raise UsageError(f"unknown suite {args.name!r}; available: hierarchy")
    seed = _resolve_seed(args.seed)
    configs = hierarchy_configs(seed=0 if seed is None else seed)
    return _execute(configs, args)


def _cmd_list(_args) -> int:
    for eid in sorted(REGISTRY):
        print(f"{eid:32s} {REGISTRY[eid].description.splitlines()[0]}")
    return EXIT_PASS


def _cmd_describe(args) -> int:
    if args.experiment_id not in REGISTRY:
        raise UsageError(
            f"unknown experiment {args.experiment_id!r}; run 'nplab list'")
    entry = REGISTRY[args.experiment_id]
    print(entry.experiment_id)
    print()
    print(entry.description)
    print()
    print("parameters (defaults):")
    for key, default in sorted(entry.schema.items()):
        print(f"  {key} = {default!r}")
    print()
    print(f"tolerances: {entry.tolerances}")
    return EXIT_PASS


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "suite": _cmd_suite, "list": _cmd_list,
                "describe": _cmd_describe}
    try:
        return handlers[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, ContractError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
