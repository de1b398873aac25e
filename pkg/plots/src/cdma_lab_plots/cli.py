"""Command line wrapper: one figure per invocation.

Exit codes: 0 success, 2 for any usable-input problem (unknown kind,
missing file, schema mismatch, no data rows).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .figures import KINDS, FigureSpec, PlotError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdma-lab-plot",
        description="Render a figure from cdma-lab CSV output.")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--csv", action="append", required=True,
                        help="input CSV path; repeat for overlay figures")
    parser.add_argument("--out", required=True,
                        help="output path; .png and .svg are both written")
    parser.add_argument("--bits", action="store_true",
                        help="use bits columns where the schema carries them")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec_args = dict(kind=args.kind, inputs=tuple(args.csv), out=args.out,
                     bits=args.bits)
    try:
        written = render(FigureSpec(**spec_args))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
