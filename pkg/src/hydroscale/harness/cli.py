"""hydroscale <kind> --config FILE [--jobs N] [--set path=value]... [--dump-paths] [--out DIR]

Exit codes: 0 all verdicts pass, 1 a verdict fails, 2 usage or config error,
3 numerical failure (blow-up, too many excluded replicas, invalid numerics).
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..asymptotics import ExperimentFailure
from ..core import InvalidInput
from ..integrators import IntegrationError
from .config import KINDS, ConfigError, load_config

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("hydroscale")


def build_parser():
    p = argparse.ArgumentParser(prog="hydroscale", description="Small-noise experiments for dissipative SPDE models.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                   help="override a config field, e.g. --set grid.steps=2000")
    p.add_argument("--dump-paths", action="store_true", help="write binary paths of the first replicas")
    p.add_argument("--out", default="out", help="output root (default: out)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.overrides, args.kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    from .run import run

    try:
        report = run(cfg, jobs=args.jobs, out_root=args.out, dump_paths=args.dump_paths)
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, ExperimentFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name, ok in report.verdicts.items():
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    log.info("output: %s (%.1f s)", report.provenance.get("output_dir"), report.wall_clock)
    return EXIT_OK if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
