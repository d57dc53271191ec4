"""meanfield-plots: render one figure from experiment CSV output.

    meanfield-plots --kind rate --input out/hk.csv --output hk.png
    meanfield-plots --kind envelope --input out/dobrushin.csv \
                    --manifest out/manifest.json --output dob.png

Exit codes: 0 success, 1 render error (missing columns, empty input,
bad kind); no output file is written on failure.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, RenderError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield-plots", description=__doc__)
    parser.add_argument(
        "--input", action="append", required=True,
        help="input CSV (repeatable for overlaid rate curves)",
    )
    parser.add_argument("--output", required=True, help="output image path")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument(
        "--manifest",
        help="manifest.json for slope cross-checks (default: next to the input)",
    )
    parser.add_argument("--title", help="figure title")
    parser.add_argument("--xlabel", help="override x-axis label")
    parser.add_argument("--ylabel", help="override y-axis label")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        options = {}
        if args.xlabel:
            options["xlabel"] = args.xlabel
        if args.ylabel:
            options["ylabel"] = args.ylabel
        spec = FigureSpec(
            inputs=args.input,
            kind=args.kind,
            output=args.output,
            manifest=args.manifest,
            title=args.title,
            options=options,
        )
        info = render(spec)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info['output']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
