"""mc-plot: render a figure from an experiment CSV.

    mc-plot --kind phase_heatmap|convergence_curves|noise_scaling \
            --in results.csv --out fig.png
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, EmptySelectionError, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mc-plot", description=__doc__)
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_csv", required=True)
    parser.add_argument("--out", dest="output_path", required=True)
    parser.add_argument("--solver", default=None,
                        help="restrict to one solver (one figure per algorithm)")
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(args.kind, args.input_csv, args.output_path, args.solver))
    except (SchemaError, EmptySelectionError, OSError) as exc:
        print(f"mc-plot: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
