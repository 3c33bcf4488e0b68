"""Script entry point: render one figure from a spec file."""

import argparse
import sys

from .plots import render
from .spec import FigureError, load_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kmfl-figs", description="Render a figure from harness CSVs"
    )
    parser.add_argument("--spec", required=True, help="path to the figure spec (YAML)")
    args = parser.parse_args(argv)
    try:
        out = render(load_spec(args.spec))
    except FigureError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
