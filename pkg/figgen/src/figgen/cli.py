"""figgen <kind> --inputs <glob...> --out <path>"""
from __future__ import annotations

import argparse
import glob
import sys

from .plots import PlotSpec, SchemaError, render


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="figgen",
                                description="Render figures from ris-resilience CSVs")
    p.add_argument("kind", choices=("adaptation", "scaling"))
    p.add_argument("--inputs", nargs="+", required=True,
                   help="CSV paths or globs (timelines for adaptation, "
                        "the sweep table for scaling)")
    p.add_argument("--out", required=True, help="output image base path")
    p.add_argument("--title", default="")
    p.add_argument("--dpi", type=int, default=150)
    args = p.parse_args(argv)

    paths: list[str] = []
    for pattern in args.inputs:
        hits = sorted(glob.glob(pattern))
        paths.extend(hits if hits else [pattern])

    try:
        _, written = render(PlotSpec(inputs=paths, kind=args.kind,
                                     out_path=args.out, title=args.title,
                                     dpi=args.dpi))
    except (SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for w in written:
        print(w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
