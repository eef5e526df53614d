#!/usr/bin/env python3
"""Render the three figure families from existing experiment CSVs.

Requires the mc-plots package (plots/) to be installed; reads the
artifacts written by scripts/run_experiments.py.
"""

import subprocess
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
ART = REPO / "artifacts" / "acceptance"
FIGS = REPO / "artifacts" / "figures"

JOBS = [
    ("phase_heatmap", ART / "phase" / "results.csv", "phase_heatmap.png"),
    ("convergence_curves", ART / "convergence" / "traces.csv", "convergence_curves.png"),
    ("noise_scaling", ART / "noise" / "results.csv", "noise_scaling.png"),
]


def main() -> int:
    FIGS.mkdir(parents=True, exist_ok=True)
    status = 0
    for kind, src, name in JOBS:
        if not src.exists():
            print(f"skip {kind}: {src} not found (run scripts/run_experiments.py first)")
            status = 1
            continue
        out = FIGS / name
        proc = subprocess.run(
            [sys.executable, "-m", "mcplots.cli", "--kind", kind,
             "--in", str(src), "--out", str(out)]
        )
        status = max(status, proc.returncode)
    return status


if __name__ == "__main__":
    sys.exit(main())
