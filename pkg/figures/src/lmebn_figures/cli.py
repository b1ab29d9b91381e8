"""Command-line front end: figures --results <csv> --out <dir> [--figures ids]."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_IDS, SchemaError, render_figures


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render the experiment figures from a results CSV.",
    )
    parser.add_argument("--results", required=True, help="results CSV path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--figures",
        nargs="+",
        default=list(FIGURE_IDS),
        choices=list(FIGURE_IDS),
        metavar="ID",
        help=f"subset of {', '.join(FIGURE_IDS)} (default: all)",
    )
    parser.add_argument(
        "--kl-column",
        default="kl_joint",
        choices=["kl_joint", "kl_mc_xonly"],
        help="which KL column the KL panels use",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        written = render_figures(args.results, args.out, args.figures, args.kl_column)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
