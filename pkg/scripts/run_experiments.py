#!/usr/bin/env python3
"""Run the committed desk-scale experiment configs end to end.

Writes results under artifacts/acceptance/<experiment>/ exactly like the
acceptance suite does, so the figures can be rendered afterwards with
scripts/render_figures.py (or mc-plot directly).
"""

import argparse
import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from lrmc.experiments import (  # noqa: E402
    load_config,
    run_convergence,
    run_noise,
    run_phase,
    run_verify,
)

RUNNERS = {
    "phase": run_phase,
    "convergence": run_convergence,
    "noise": run_noise,
    "verify": run_verify,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--only", choices=sorted(RUNNERS), default=None,
                        help="run a single experiment instead of all four")
    parser.add_argument("--threads", type=int, default=2)
    parser.add_argument("--out", default=str(REPO / "artifacts" / "acceptance"))
    args = parser.parse_args()

    names = [args.only] if args.only else ["phase", "convergence", "noise", "verify"]
    exit_code = 0
    for name in names:
        config = load_config(REPO / "configs" / "acceptance" / f"{name}.cfg")
        out_dir = Path(args.out) / name
        t0 = time.perf_counter()
        result = RUNNERS[name](config, out_dir, threads=args.threads,
                               command=f"scripts/run_experiments.py --only {name}")
        elapsed = time.perf_counter() - t0
        print(f"{name}: {result} ({elapsed:.0f}s) -> {out_dir}")
        if name == "verify" and result != 0:
            exit_code = 1
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
