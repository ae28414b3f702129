"""Command line entry point.

Exit codes: 0 all checks pass, 1 some check fails, 2 bad input, 3 numeric
breakdown.
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources

from .exceptions import InputError, NumericError
from .instance import parse_instance
from .suite import COMMANDS, SuiteOptions, run_suite
from .tolerance import default_policy

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def demo_text() -> str:
    return resources.files("obsmanifold").joinpath("data/demo.inst").read_text(encoding="utf-8")


def _order(text: str):
    if text in ("inf", "smooth"):
        return math.inf
    try:
        r = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"order must be a positive integer or 'inf', got {text!r}") from None
    if r < 1:
        raise argparse.ArgumentTypeError("order must be at least 1")
    return r


def _alpha(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be comma-separated numbers, got {text!r}") from None
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("alpha values must lie in [0, 1]")
    return vals


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerances must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obsmanifold", description="Validate observer-structure instance files.")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS + ("all",):
        p = sub.add_parser(cmd)
        p.add_argument("instance", nargs="?", help="instance file ('-' for standard input)")
        p.add_argument("--demo", action="store_true", help="use the bundled demo instance")
        p.add_argument("--json", action="store_true", help="emit the report as JSON")
        p.add_argument("--tol-eq", type=_positive)
        p.add_argument("--tol-deriv", type=_positive)
        p.add_argument("--seed", type=int, help="append a randomized sweep driven by this seed")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for independent checks")
        if cmd in ("diff-check", "all"):
            p.add_argument("--point", help="source point to test (default: every point)")
            p.add_argument("--order", type=_order, help="smoothness order r, or 'inf'")
            p.add_argument("--alpha", type=_alpha, help="level, e.g. 0.5 or 0.5,0.25 (default: mu(p))")
    return ap


def _read(args) -> str:
    if args.demo:
        return demo_text()
    if args.instance is None:
        raise InputError("give an instance file or --demo")
    if args.instance == "-":
        return sys.stdin.read()
    try:
        with open(args.instance, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {args.instance}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{args.instance} is not UTF-8 text") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        tol = default_policy().with_overrides(eq_tol=args.tol_eq, deriv_tol=args.tol_deriv)
        inst = parse_instance(_read(args))
        opts = SuiteOptions(
            point=getattr(args, "point", None),
            order=getattr(args, "order", None),
            alpha=getattr(args, "alpha", None),
            seed=args.seed,
            jobs=max(1, args.jobs),
        )
        report = run_suite(inst, args.command, opts, tol)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(report.to_json() if args.json else report.to_text())
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
