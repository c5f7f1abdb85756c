"""Command-line figure generation: dflyplot <kind> --run <dir> --out <file>."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURES, render
from .schema import SchemaError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dflyplot",
        description="Render figures from simulator run CSVs (batch, deterministic)")
    parser.add_argument("kind", choices=sorted(FIGURES))
    parser.add_argument("--run", required=True, help="run directory with the CSVs")
    parser.add_argument("--compare", help="second run directory to overlay")
    parser.add_argument("--out", required=True, help="output .png or .svg path")
    parser.add_argument("--from-group", type=int, default=0,
                        help="source group for the stall graph edges")
    args = parser.parse_args(argv)
    try:
        annotations = render(args.kind, args.out, args.run,
                             compare_dir=args.compare, from_group=args.from_group)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.kind} -> {args.out} ({len(annotations)} annotations)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
