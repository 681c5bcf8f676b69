"""Command line front end for rendering convergence figures."""

import argparse
import sys

from .core import CsvFormatError, plot_convergence


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="spdeplots",
        description="Render a log-log convergence figure from study CSV files.")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="study CSV file(s), one curve each")
    parser.add_argument("--order", type=float, default=None,
                        help="slope of the dashed reference guide line")
    parser.add_argument("--out", default="fig.svg",
                        help="output figure path; SVG and PNG are both written")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (None, 0) else int(exc.code)
    try:
        result = plot_convergence(args.inputs, expected_order=args.order,
                                  out=args.out)
    except (CsvFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for label in sorted(result["slopes"]):
        slope = result["slopes"][label]
        detail = "single level" if slope is None else f"slope {slope:.4f}"
        print(f"{label}: {detail}")
    print(f"wrote {', '.join(result['outputs'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
