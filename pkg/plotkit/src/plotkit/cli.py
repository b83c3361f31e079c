"""Command-line renderer: plotkit <kind> --csv ... --out ..."""

from __future__ import annotations

import argparse
import sys

from . import figures, schema


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotkit",
                                     description="Render figures from arislab CSVs")
    parser.add_argument("kind", choices=figures.KINDS)
    parser.add_argument("--csv", required=True, help="input CSV (runs/summary/paths)")
    parser.add_argument("--out", required=True, help="output image (.svg or .png)")
    parser.add_argument("--scheme", action="append", default=None,
                        help="scheme selector (repeatable; default: all)")
    parser.add_argument("--nodes", default=None,
                        help="nodes.csv for trajectory overlays")
    parser.add_argument("--platform", default="uav", choices=("uav", "hap"))
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = figures.FigureSpec(kind=args.kind, csv_path=args.csv,
                                  out_path=args.out, schemes=args.scheme or [],
                                  nodes_csv=args.nodes, platform=args.platform,
                                  title=args.title)
        figures.render(spec)
    except schema.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
