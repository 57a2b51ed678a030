"""Command line: ``reftrack run | verify | dump-defaults``.

Exit codes: 0 success, 1 run or verification failure, 2 usage or config error.
"""
import argparse
import dataclasses
import logging
import os
import sys

from .config import TimeConfig, dump_defaults, parse_config
from .errors import ConfigParseError, ConfigValidationError, ReftrackError, StepFailure, UnknownCase

log = logging.getLogger("reftrack")


def _parser():
    p = argparse.ArgumentParser(prog="reftrack", description="Eulerian return-map FSI solver")
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a simulation from a config file")
    run.add_argument("--config", required=True, metavar="PATH")
    run.add_argument("--steps", type=int, metavar="N", help="override time.n_steps")
    run.add_argument("--out", metavar="DIR", help="override output.dir")
    ver = sub.add_parser("verify", help="run the built-in oracle suites")
    ver.add_argument("--suite", metavar="NAME", help="run one suite only")
    dd = sub.add_parser("dump-defaults", help="print an annotated default config")
    dd.add_argument("--out", metavar="PATH", help="write to a file instead of stdout")
    return p


def _cmd_run(args):
    from .engine import Simulation

    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    if args.steps is not None:
        if args.steps < 0:
            print("error: --steps must be nonnegative", file=sys.stderr)
            return 2
        cfg.time = dataclasses.replace(cfg.time, n_steps=args.steps)
    out_dir = args.out or cfg.output.dir
    try:
        sim = Simulation(cfg)
        state, reports = sim.run(out_dir=out_dir)
    except StepFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        if exc.cause is not None:
            print(f"  cause: {exc.cause}", file=sys.stderr)
        print(f"  last healthy state dumped to {os.path.join(out_dir, 'failure.vtk')}", file=sys.stderr)
        return 1
    except ReftrackError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    last = reports[-1] if reports else None
    print(f"completed {len(reports)} steps; output in {out_dir}")
    if last is not None:
        print(
            f"t = {last.t:.6g}  stored = {last.stored:.9g}  "
            f"min det(grad xi) = {min(r.detgrad_min for r in reports):.6g}  "
            f"min pi_eps = {min(r.pi_min for r in reports):.6g}"
        )
    return 0


def _cmd_verify(args):
    from .verify import run_suites

    try:
        checks = run_suites([args.suite] if args.suite else None)
    except UnknownCase as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for chk in checks:
        print(chk.row())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def _cmd_dump_defaults(args):
    text = dump_defaults()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": _cmd_run, "verify": _cmd_verify, "dump-defaults": _cmd_dump_defaults}[args.command]
    return handler(args)


cli = main
