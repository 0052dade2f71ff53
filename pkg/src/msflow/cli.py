"""Command-line entry point: ``msflow run | verify | diagnose``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .runner import MissingSnapshots, RunDiverged, diagnose, run, thread_cap
from .verify import SUITES, run_suites

EXIT_OK, EXIT_FAIL, EXIT_DIVERGED, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3, 4


def _error(kind, message, code, **extra):
    doc = {"error": kind, "message": message, "exit_code": code}
    doc.update(extra)
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), EXIT_CONFIG)
    try:
        result = run(cfg, args.out)
    except RunDiverged as exc:
        return _error("NewtonDivergence", str(exc), EXIT_DIVERGED, step=exc.step_index,
                      run_dir=str(exc.run_dir))
    print(str(result.run_dir))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        return _error("UnknownSuite", f"unknown suite {args.suite!r}; choose from {sorted(SUITES)}", EXIT_CONFIG)
    try:
        workers = thread_cap() or 1
    except ValueError as exc:
        return _error("ConfigError", str(exc), EXIT_CONFIG)
    checks = run_suites([args.suite], workers)[args.suite]
    passed = all(c["passed"] for c in checks)
    report = {"suite": args.suite, "passed": passed, "checks": checks}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_diagnose(args) -> int:
    names = [n for group in args.which for n in group.replace(",", " ").split()]
    if not names:
        return _error("ConfigError", "no diagnostics requested", EXIT_CONFIG)
    try:
        written = diagnose(args.rundir, names)
    except MissingSnapshots as exc:
        return _error("MissingSnapshots", str(exc), EXIT_MISSING)
    except (ValueError, ConfigError) as exc:
        return _error("ConfigError", str(exc), EXIT_CONFIG)
    for p in written:
        print(str(p))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="msflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="run a named property suite")
    p.add_argument("suite")
    p.add_argument("--json", default=None, help="also write the report here")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("diagnose", help="recompute diagnostics of a stored run")
    p.add_argument("rundir")
    p.add_argument("--which", nargs="+", required=True)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
