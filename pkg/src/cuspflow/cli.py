"""Command line entry point ``cuspflow``.

Exit codes: 0 every check passed, 1 some acceptance check failed,
2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .metrics import DomainError
from .solver import InvariantViolation, StepFailure

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _float_list(text):
    try:
        return tuple(harness._parse_float(s) for s in text.split(",") if s.strip())
    except harness.ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="cuspflow", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=harness.EXPERIMENTS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--format", choices=("csv", "json", "both"), help="which report files to write")
    p.add_argument("--grid", type=int, help="number of grid nodes")
    p.add_argument("--r0", type=_float_list, help="comma separated cap radii, e.g. exp(-20),exp(-30)")
    p.add_argument("--t-samples", type=_float_list, help="comma separated sample times")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    ts = tuple(sorted(set(args.t_samples))) if args.t_samples else None
    try:
        cfg = harness.load_config(
            args.config,
            experiment=args.experiment,
            out=args.out,
            format=args.format,
            grid=args.grid,
            r0=args.r0,
            t_samples=ts,
        )
        report = harness.run_experiment(cfg)
    except harness.ConfigError as exc:
        print(f"cuspflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailure, InvariantViolation, DomainError) as exc:
        print(f"cuspflow: solver failure in {args.experiment}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        paths = harness.emit_report(report, cfg.format, cfg.out)
    except OSError as exc:
        print(f"cuspflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<36} {c.value!r:<24} {c.limit}")
    if report.fit:
        f = report.fit
        print(f"fit: p = {f['p']:.4f}  c = {f['c']:.4g}  R^2 = {f['r2']:.4f}")
    for path in paths:
        print(f"wrote {path}")
    if not report.passed:
        print(f"first failing check: {report.first_failure}")
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
