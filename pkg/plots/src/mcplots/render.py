"""Figure rendering from the frozen experiment CSV schema.

Three figure families: success-rate heatmaps over the (p, q) grid,
convergence curves with spread bands from per-iteration traces, and
noise-scaling lines in dB.  The module only aggregates and displays CSV
columns; it never recomputes anything numerical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = "1"
KINDS = ("phase_heatmap", "convergence_curves", "noise_scaling")

AXIS_LABELS = {
    "phase_heatmap": ("p = m/n^2", "q = (2n-r)r/m"),
    "convergence_curves": ("iteration", "log10 relative residual"),
    "noise_scaling": ("SNR (dB)", "relative error (dB)"),
}

# Cells of the phase grid with no usable rows (skipped cells).
MISSING_COLOR = "#808080"


class SchemaError(Exception):
    """The CSV does not carry a supported schema version or misses columns."""


class EmptySelectionError(Exception):
    """No rows match what the figure kind needs."""


@dataclass
class FigureSpec:
    kind: str
    input_csv: str
    output_path: str
    solver: str | None = None  # optional filter, e.g. one heatmap per algorithm

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


def load_rows(path: str, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [col for col in ("schema_version", *required) if col not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        rows = list(reader)
    bad = {row["schema_version"] for row in rows} - {SUPPORTED_SCHEMA}
    if bad:
        raise SchemaError(
            f"{path}: unsupported schema version(s) {sorted(bad)}; this tool reads "
            f"version {SUPPORTED_SCHEMA}"
        )
    return rows


def phase_fractions(rows: list[dict]):
    """Success fraction per (p, q) cell; NaN marks cells with no trials."""
    trials = [r for r in rows if r.get("row_kind") == "trial" and r.get("success") != ""]
    cells = {r["p"] for r in rows if r.get("p")}
    if not trials and not cells:
        raise EmptySelectionError("no phase rows in the input")
    ps = sorted({float(r["p"]) for r in rows if r.get("p")})
    qs = sorted({float(r["q"]) for r in rows if r.get("q")})
    grid = np.full((len(qs), len(ps)), np.nan)
    counts: dict[tuple[int, int], list[int]] = {}
    for r in trials:
        i = qs.index(float(r["q"]))
        j = ps.index(float(r["p"]))
        counts.setdefault((i, j), []).append(1 if r["success"] == "1" else 0)
    for (i, j), flags in counts.items():
        grid[i, j] = sum(flags) / len(flags)
    if np.all(np.isnan(grid)):
        raise EmptySelectionError("phase rows carry no completed trials")
    return ps, qs, grid


def _render_phase(rows, ax):
    ps, qs, grid = phase_fractions(rows)
    masked = np.ma.masked_invalid(grid)
    cmap = plt.get_cmap("gray").copy()
    cmap.set_bad(MISSING_COLOR)
    ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0, origin="lower",
              aspect="auto", interpolation="nearest")
    ax.set_xticks(range(len(ps)), [f"{p:g}" for p in ps])
    ax.set_yticks(range(len(qs)), [f"{q:g}" for q in qs])
    return grid


def _render_convergence(rows, ax):
    by_line: dict[tuple[str, str], dict[int, list[float]]] = {}
    for r in rows:
        resid = r.get("rel_residual", "")
        if resid == "" or float(resid) <= 0.0:
            continue
        key = (r["solver"], r.get("oversampling", ""))
        by_line.setdefault(key, {}).setdefault(int(r["iteration"]), []).append(
            math.log10(float(resid))
        )
    if not by_line:
        raise EmptySelectionError("no trace rows with positive residuals")
    for (solver, ratio), per_iter in sorted(by_line.items()):
        its = sorted(per_iter)
        mean = np.array([np.mean(per_iter[i]) for i in its])
        std = np.array([np.std(per_iter[i]) for i in its])
        label = solver if not ratio else f"{solver} (1/q={float(ratio):g})"
        ax.plot(its, mean, label=label)
        ax.fill_between(its, mean - std, mean + std, alpha=0.25)
    ax.legend()
    return by_line


def _render_noise(rows, ax):
    by_line: dict[tuple[str, str], dict[float, list[float]]] = {}
    for r in rows:
        if r.get("row_kind") != "trial" or r.get("sigma", "") in ("", "0.0"):
            continue
        if r.get("rel_error", "") == "" or float(r["rel_error"]) <= 0.0:
            continue
        key = (r["solver"], r.get("oversampling", ""))
        by_line.setdefault(key, {}).setdefault(float(r["sigma"]), []).append(
            float(r["rel_error"])
        )
    if not by_line:
        raise EmptySelectionError("no noise rows with positive errors")
    for (solver, ratio), per_sigma in sorted(by_line.items()):
        sigmas = sorted(per_sigma)
        snr_db = [-20.0 * math.log10(s) for s in sigmas]
        err_db = [20.0 * math.log10(np.mean(per_sigma[s])) for s in sigmas]
        label = solver if not ratio else f"{solver} (1/q={float(ratio):g})"
        ax.plot(snr_db, err_db, marker="o", label=label)
    ax.legend()
    return by_line


_REQUIRED = {
    "phase_heatmap": ("row_kind", "p", "q", "success"),
    "convergence_curves": ("solver", "oversampling", "iteration", "rel_residual"),
    "noise_scaling": ("row_kind", "solver", "oversampling", "sigma", "rel_error"),
}

_RENDERERS = {
    "phase_heatmap": _render_phase,
    "convergence_curves": _render_convergence,
    "noise_scaling": _render_noise,
}


def render(spec: FigureSpec):
    """Render one figure; returns the aggregated data behind it."""
    rows = load_rows(spec.input_csv, _REQUIRED[spec.kind])
    if spec.solver is not None:
        rows = [row for row in rows
                if row.get("solver", "") in ("", spec.solver)]
        if not any(row.get("solver") == spec.solver for row in rows):
            raise EmptySelectionError(
                f"no rows for solver {spec.solver!r} in {spec.input_csv}")
    fig, ax = plt.subplots(figsize=(5.0, 4.0), dpi=120)
    try:
        data = _RENDERERS[spec.kind](rows, ax)
        xlabel, ylabel = AXIS_LABELS[spec.kind]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        fig.savefig(spec.output_path)
    finally:
        plt.close(fig)
    return data
