"""Command line entry point.

Usage::

    fragclt VERB [--config PATH] [--seed N] [--out DIR] [--jobs N] [--format {csv,json}]

Exit status is 0 when every verdict passes, 1 when any fails and 2 on
configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError
from .experiments import EXPERIMENT_IDS, ExperimentAbort, load_config_file, make_config, run_experiment

log = logging.getLogger("fragclt")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fragclt", description="Frozen-fragment experiments.")
    ap.add_argument("verb", choices=list(EXPERIMENT_IDS))
    ap.add_argument("--config", help="YAML file with one section per experiment")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", help="output directory (report JSON and CSV tables)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--format", choices=["csv", "json"], default="json", dest="fmt")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = load_config_file(args.config)
        cfg = make_config(args.verb, raw, seed=args.seed, jobs=args.jobs, out=args.out, fmt=args.fmt)
        report = run_experiment(cfg)
    except (ConfigurationError, ExperimentAbort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any runtime failure is reported, not raised
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if cfg.out:
        for path in report.write(cfg.out, cfg.fmt):
            log.info("wrote %s", path)
    for v in report.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {report.experiment}.{v.name} value={v.value} tol={v.tolerance}")
    return 0 if report.passed else 1
