"""figure <id> --in <run-dir> --out <file.png|svg>"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .io import SchemaError
from .render import FIGURES, check_inputs, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figure",
        description="Render one figure from a hyaksim run directory.")
    parser.add_argument("figure_id", choices=sorted(FIGURES),
                        help="which figure to draw")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="run directory holding the CSV inputs")
    parser.add_argument("--out", help="output image path (.png or .svg)")
    parser.add_argument("--check-only", action="store_true",
                        help="validate input schemas without drawing")
    parser.add_argument("--model", choices=("I", "II", "III", "IV"),
                        help="strata figure: which model's estimates"
                             " (default: best available)")
    parser.add_argument("--design", choices=("cluster", "hyak"),
                        help="strata/tradeoff figures: which design"
                             " (default: hyak when present)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    options = {}
    if args.figure_id == "strata":
        options = {"design": args.design, "model": args.model}
    elif args.figure_id == "tradeoff":
        options = {"design": args.design}

    try:
        if args.check_only:
            check_inputs(args.figure_id, Path(args.in_dir))
            print(f"{args.figure_id}: inputs ok")
            return 0
        if not args.out:
            print("error: --out is required unless --check-only",
                  file=sys.stderr)
            return 2
        detail = render(args.figure_id, Path(args.in_dir), Path(args.out),
                        **options)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({detail})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
