"""figgen command line: render figures from a spec over sweep CSVs."""
from __future__ import annotations

import argparse
import sys

from .render import FigureSpecError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figgen", description=__doc__)
    parser.add_argument("--spec", required=True, help="figure spec JSON")
    parser.add_argument("--out", required=True, help="output directory for images")
    args = parser.parse_args(argv)
    try:
        for path in render(args.spec, args.out):
            print(path)
    except FigureSpecError as e:
        print(f"figure spec error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
