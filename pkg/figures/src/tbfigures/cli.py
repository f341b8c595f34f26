"""render_figures --input results.csv --out fig.svg [--title STR]"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="Render a sweep results CSV into a three-panel figure.",
    )
    parser.add_argument("--input", required=True, metavar="results.csv")
    parser.add_argument("--out", required=True, metavar="fig.svg")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    try:
        summary = render(
            FigureSpec(input_csv=args.input, output_path=args.out, title=args.title)
        )
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    methods = sorted({m for drawn in summary["curves"].values() for m in drawn})
    print(f"panels={summary['panels']} methods={','.join(methods)}")
    print(f"out={summary['output']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
