"""Command-line entry point.

    meanfield run [experiment] --config cfg.json [--seed N]
                  [--output-dir DIR] [--threads K] [--param key=value ...]
    meanfield validate [experiment] --config cfg.json [--param key=value ...]

Flags override the config file.  Exit codes: 0 success, 2 config error,
3 numerical failure (collision, blow-up, non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import ConfigError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if args.experiment:
        raw["experiment"] = args.experiment
    if args.output_dir:
        raw["output_dir"] = args.output_dir
    if args.param:
        params = dict(raw.get("parameters", {}))
        for item in args.param:
            if "=" not in item:
                raise ConfigError(f"--param expects key=value, got {item!r}")
            key, _, value = item.partition("=")
            params[key] = _parse_value(value)
        raw["parameters"] = params
    return raw


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("experiment", nargs="?", help="experiment name")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--output-dir", help="override output directory")
    parser.add_argument(
        "--param",
        action="append",
        metavar="KEY=VALUE",
        help="override one parameter (value parsed as JSON when possible)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meanfield",
        description="mean-field particle-system experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment and write artifacts")
    _add_common(run_p)
    run_p.add_argument("--seed", type=int, help="override master seed")
    run_p.add_argument(
        "--threads", type=int, default=1,
        help="worker pool size for ensemble members (default 1)",
    )

    val_p = sub.add_parser("validate", help="check a config without running")
    _add_common(val_p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _load_config(args)
        if args.command == "validate":
            report = harness.validate(raw)
            json.dump(report, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return EXIT_OK
        manifest = harness.run(
            raw, workers=max(1, args.threads), seed_override=args.seed
        )
        out = manifest["config"]["output_dir"]
        for name in manifest["outputs"]:
            print(f"wrote {out}/{name}")
        print(f"wrote {out}/manifest.json")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
