"""Command-line entry point: ``qfk-lab <subcommand> [--config PATH] [--quick] ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConvergenceError, ResourceError
from .experiments import RUNNERS, SUBCOMMANDS, ConfigError, normalize_config

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_CONVERGENCE = 0, 2, 3, 4

log = logging.getLogger("qfk_lab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfk-lab", description="Quantum kernel experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config; omitted fields take defaults")
    p.add_argument("--quick", action="store_true", help="small CI-sized profile")
    p.add_argument("--out", default=None, help="output directory (default: results/<subcommand>)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config:
            with open(args.config) as fh:
                raw = json.load(fh)
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        cfg = normalize_config(raw, args.subcommand, args.quick, args.seed, args.threads)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.path.join("results", args.subcommand)
    try:
        report = RUNNERS[args.subcommand](cfg)
    except ResourceError as exc:
        print(f"resource refusal: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report.write(out)
    log.info("wrote %d rows to %s", len(report.rows), out)
    print(json.dumps(report.comparators, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
