"""Command-line wrapper: render one figure from a JSON spec or plain flags."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .render import FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="busoff-plots",
        description="Render report figures from busoff CSV outputs",
    )
    ap.add_argument("--version", action="version",
                    version=f"busoff-plots {__version__}")
    ap.add_argument("--spec", help="JSON file with FigureSpec fields")
    ap.add_argument("--kind",
                    choices=["residuals", "distance", "counter", "combined"])
    ap.add_argument("--input", action="append", default=[],
                    help="input CSV (repeatable)")
    ap.add_argument("--output", help="output image path (.png or .svg)")
    ap.add_argument("--label", action="append", default=[],
                    help="series label, one per input")
    ap.add_argument("--tau-h", type=float, default=2.5, dest="tau_h")
    ap.add_argument("--d-0", type=float, default=5.0, dest="d_0")
    return ap


def spec_from_args(args) -> FigureSpec:
    if args.spec:
        with open(args.spec) as fh:
            raw = json.load(fh)
        allowed = {"inputs", "kind", "output", "labels", "tau_h", "d_0"}
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"unknown spec key(s): {sorted(unknown)}")
        return FigureSpec(**raw)
    if not (args.kind and args.input and args.output):
        raise ValueError("need --spec, or all of --kind/--input/--output")
    return FigureSpec(inputs=args.input, kind=args.kind, output=args.output,
                      labels=args.label, tau_h=args.tau_h, d_0=args.d_0)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(spec_from_args(args))
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
