"""Command line entry point: mfje-plots render --in DIR --spec FILE --out DIR."""

from __future__ import annotations

import argparse
import sys

from .render import PlotInputError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfje-plots",
        description="Render figures from mfje experiment CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("--in", dest="results_dir", required=True,
                   help="directory containing experiment CSV outputs")
    p.add_argument("--spec", required=True, help="JSON figure spec")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        written = render(args.results_dir, args.spec, args.out)
    except PlotInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
