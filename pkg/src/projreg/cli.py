"""Command-line front end: run, validate, list-experiments.

Exit codes: 0 success, 1 validation error, 2 runtime error (any partial
results already computed are still written).
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import yaml

from .harness import ConfigError, emit, run_experiment, validate_config


def _bundled_configs() -> dict:
    out = {}
    root = resources.files("projreg") / "configs"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            out[entry.name[: -len(".yaml")]] = entry
    return out


def _resolve_config(arg: str):
    path = Path(arg)
    if path.exists():
        return path.read_text(), str(path)
    bundled = _bundled_configs()
    name = arg[: -len(".yaml")] if arg.endswith(".yaml") else arg
    if name in bundled:
        return bundled[name].read_text(), f"bundled:{name}"
    raise ConfigError(
        f"no config file at {arg!r} and no bundled experiment of that name; "
        "see `projreg list-experiments`"
    )


def _cmd_run(args) -> int:
    text, origin = _resolve_config(args.config)
    try:
        raw = yaml.safe_load(text)
        if args.seed is not None:
            raw["seed"] = args.seed
        config = validate_config(raw)
    except ConfigError as exc:
        print(f"validation error in {origin}: {exc}", file=sys.stderr)
        return 1
    formats = ("csv", "jsonl") if args.format == "both" else (args.format,)
    try:
        table = run_experiment(config, workers=args.workers)
    except Exception as exc:  # noqa: BLE001 - surfaced with exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    paths = emit(table, args.out, formats)
    for path in paths:
        print(path)
    if table.cell_errors:
        for value, message in table.cell_errors:
            print(f"runtime error at grid value {value}: {message}", file=sys.stderr)
        print("partial results written for the remaining cells", file=sys.stderr)
        return 2
    return 0


def _cmd_validate(args) -> int:
    text, origin = _resolve_config(args.config)
    try:
        config = validate_config(text)
    except ConfigError as exc:
        print(f"validation error in {origin}: {exc}", file=sys.stderr)
        return 1
    cells = len(config.grid) * len(config.methods)
    print(f"{origin}: ok ({config.experiment}, {len(config.grid)} grid points, "
          f"{len(config.methods)} methods, {cells} cells)")
    return 0


def _cmd_list(_args) -> int:
    for name in _bundled_configs():
        print(name)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="projreg",
        description="Run projection-regression experiments from declarative configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="path to a YAML config, or a bundled name")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--workers", type=int, default=1, help="parallel grid cells")
    run_p.add_argument("--format", choices=("csv", "jsonl", "both"), default="csv")
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="check a config without running it")
    val_p.add_argument("config")
    val_p.set_defaults(func=_cmd_validate)

    list_p = sub.add_parser("list-experiments", help="show bundled experiment configs")
    list_p.set_defaults(func=_cmd_list)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
