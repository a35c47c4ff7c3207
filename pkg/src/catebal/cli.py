"""Command-line entry point.

Subcommands: case-study, gamma-sweep, rct-size-sweep, csv-run, verify.
Each takes an optional `--config FILE` in the documented key-value format
plus repeatable `--set key=value` overrides (flags win over the file).
The output root defaults to '.' and can be moved with the CATEBAL_OUT
environment variable or the per-run `out_dir` key.

Exit codes: 0 success, 1 a verification check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .datagen import DataError
from .experiments import (
    ConfigError,
    load_config,
    run_case_study,
    run_csv,
    run_gamma_sweep,
    run_rct_size_sweep,
    run_verify,
)

_COMMANDS = {
    "case-study": run_case_study,
    "gamma-sweep": run_gamma_sweep,
    "rct-size-sweep": run_rct_size_sweep,
    "csv-run": run_csv,
}


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catebal",
        description="CATE estimation under hidden confounding with outcome-only "
        "RCT balancing: experiments and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(_COMMANDS) + ["verify"]:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key-value config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            dest="overrides",
            help="override one config key (repeatable)",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seeds", default=None, help="comma-separated seed list")
        p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _parse_overrides(args.overrides)
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.seeds is not None:
            overrides["seeds"] = args.seeds
        if args.workers is not None:
            overrides["workers"] = str(args.workers)
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "verify":
            ok, report = run_verify(cfg)
            print(report)
            return 0 if ok else 1
        records, out_dir = _COMMANDS[args.command](cfg)
        print(f"{len(records)} runs -> {out_dir}/metrics.csv")
        return 0
    except (ConfigError, DataError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
