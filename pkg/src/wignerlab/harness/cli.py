"""Command line: ``wignerlab run | validate | report``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .emit import FORMATS, emit
from .runner import default_threads, load_results, run
from .validate import SUITES, run_suite


def _print_verdicts(verdicts, out=None):
    out = out or sys.stdout
    for v in verdicts:
        val = v["value"]
        vs = "-" if val is None else (f"{val:.6g}" if isinstance(val, float) else str(val))
        thr = "" if v["threshold"] is None else f" ({v['op']} {v['threshold']:.6g})"
        print(f"{v['status']:7s} {v['clause']}: {vs}{thr}", file=out)


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = args.out or cfg.output or f"results/{cfg.experiment}"
    bundle = run(cfg, out, args.threads or default_threads())
    _print_verdicts(bundle.verdicts)
    print(f"results in {out} ({bundle.manifest['failure_count']} failed trials)")
    return 0 if bundle.passed else 1


def cmd_validate(args):
    checks = run_suite(args.suite, args.seed)
    for c in checks:
        status = "PASS" if c["ok"] else "FAIL"
        print(f"{status:7s} [{c['suite']}] {c['name']}: {c['value']:.3g} ({c['op']} {c['threshold']:.3g})")
    return 0 if all(c["ok"] for c in checks) else 1


def cmd_report(args):
    try:
        bundle = load_results(args.results_dir)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 2
    formats = FORMATS if args.format is None else (args.format,)
    emit(bundle, args.results_dir, formats)
    _print_verdicts(bundle.verdicts)
    return 0 if bundle.passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="wignerlab", description="Monte Carlo experiments on deformed Wigner matrices")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--threads", type=int)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="run the deterministic validator suites")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="recompute verdicts and files from a results directory")
    rep.add_argument("results_dir")
    rep.add_argument("--format", choices=FORMATS)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
