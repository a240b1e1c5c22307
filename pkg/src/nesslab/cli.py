"""``ness-lab`` command-line entry point.

Subcommands::

    ness-lab run CONFIG [--output-dir DIR] [--workers N] [--backend NAME] [--quiet]
    ness-lab validate CONFIG
    ness-lab presets

Exit codes: 0 success, 1 a checked contract failed, 2 invalid configuration,
3 unknown preset, 4 size limit exceeded.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import (
    EXIT_CONFIG,
    EXIT_CONTRACT,
    EXIT_OK,
    exit_code_for,
    load_config,
    validate,
)
from ._backend import available_backends
from .io import write_csv
from .presets import describe_presets

__all__ = ["main", "build_parser"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ness-lab",
        description="Nonequilibrium steady states of Markov models: response, "
        "path-space densities and limit exchanges.",
    )
    parser.add_argument("--version", action="version", version=f"nesslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="validate then run every experiment in a config file")
    run.add_argument("config")
    run.add_argument("--output-dir", help="overrides 'output' keys and NESSLAB_OUTPUT_DIR")
    run.add_argument("--workers", type=int, default=None,
                     help="worker threads for sampling (results do not depend on it)")
    run.add_argument("--backend", choices=("auto", "compiled", "python"), default=None)
    run.add_argument("--quiet", action="store_true", help="print only failures and the summary")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")

    sub.add_parser("presets", help="list model and driving presets")
    return parser


def _report_diagnostics(diags):
    for d in diags:
        print(f"error: {d}", file=sys.stderr)
    return exit_code_for(diags)


def _meta(cfg, table):
    meta = [("identity", table.identity), ("experiment", cfg.experiment), ("model", cfg.model)]
    if cfg.seed is not None:
        meta.append(("seed", cfg.seed))
    return meta


def _run(args):
    configs, diags = load_config(args.config)
    diags = diags + validate(configs)
    if diags:
        return _report_diagnostics(diags)
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    backend = None if args.backend in (None, "auto") else args.backend
    if backend is not None and backend not in available_backends():
        print(f"error: backend {backend!r} is not available; have "
              f"{', '.join(available_backends())}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiments import run_experiment

    status = EXIT_OK
    for cfg in configs:
        result = run_experiment(cfg, workers=args.workers, backend=backend)
        outdir = cfg.output_dir(args.output_dir)
        for table in result.tables:
            path = write_csv(outdir / f"{cfg.name}{table.suffix}.csv", table.columns,
                             table.rows, _meta(cfg, table))
            if not args.quiet:
                print(f"wrote {path}")
        for c in result.contracts:
            if not (args.quiet and c.passed):
                print(f"[{cfg.name}] {c.line()}")
        if not result.passed:
            status = EXIT_CONTRACT
    print("all contracts passed" if status == EXIT_OK else "some contracts failed")
    return status


def _validate(args):
    configs, diags = load_config(args.config)
    diags = diags + validate(configs)
    if diags:
        return _report_diagnostics(diags)
    print(f"{args.config}: {len(configs)} experiment(s) valid")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print(describe_presets())
        return EXIT_OK
    if args.command == "validate":
        return _validate(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
