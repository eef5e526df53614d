"""Seeded experiment harness: phase transitions, convergence, noise, verify.

Every run is driven by a flat key-value config file plus a master seed.
Per-trial seeds derive from SHA-256 of the master seed, the grid
coordinates, and the trial index, so results are reproducible regardless
of scheduling.  Results land in a frozen, versioned CSV schema; the
plotting frontend consumes only these files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import initialization
from .diagnostics import (
    check_projection_bounds,
    check_recursion,
    convergence_constants,
    estimate_asymmetric_rip,
    estimate_local_rip,
    procrustes_align,
)
from .errors import ConfigError, InitFailureError, LrmcError, RegimeError
from .linalg import (
    LowRankMatrix,
    random_lowrank,
    random_lowrank_with_spectrum,
    rel_error,
    spectrum_summary,
)
from .sampling import (
    ObservedData,
    incoherence_report,
    sample_with_replacement,
    sample_without_replacement,
)
from .solvers import SolverOptions, solve
from .tangent import TangentVector, retract

SCHEMA_VERSION = "1"

RESULTS_COLUMNS = [
    "schema_version", "experiment", "row_kind", "solver", "sampling", "init_scheme",
    "n", "r", "p", "q", "oversampling", "sigma", "snr_db", "trial", "seed",
    "success", "rel_error", "observed_residual", "iterations", "iterations_std",
    "restarts", "status", "mu0", "mu1", "kappa", "wall_time_s",
]

TRACES_COLUMNS = [
    "schema_version", "experiment", "solver", "n", "r", "p", "q", "oversampling",
    "sigma", "trial", "seed", "iteration", "rel_residual", "alpha", "beta",
    "restarted", "wall_time_s",
]

# Columns excluded from determinism comparisons.
WALL_TIME_COLUMNS = ("wall_time_s",)

EXPERIMENTS = ("phase", "convergence", "noise", "verify")
SAMPLING_MODES = ("without_replacement", "with_replacement")


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class ExperimentConfig:
    experiment: str = "phase"
    n: int = 200
    r: int = 0                       # explicit rank (convergence/noise); phase derives r from q
    p_grid: list = field(default_factory=list)
    q_grid: list = field(default_factory=list)
    oversampling_grid: list = field(default_factory=list)  # values of 1/q
    sigma_grid: list = field(default_factory=list)
    trials: int = 10
    solvers: list = field(default_factory=lambda: ["rgrad", "rcg", "rcg_restarted"])
    success_threshold: float = 1e-2
    residual_tol: float = 1e-9
    max_iterations: int = 500
    master_seed: int = 0
    sampling: str = "without_replacement"
    init_scheme: str = "one_step_ht"
    init_L: int = 5
    init_mu0_cap: float | None = None
    z0_scaling: str = "inverse_p"
    kappa1: float = 0.1
    kappa2: float = 1.0
    stall_window: int = 0            # 0 disables the stall early stop
    stall_min_progress: float = 0.01
    beta_log: float = 2.0
    # verify sweep sizes
    projection_instances: int = 1000
    procrustes_pairs: int = 500
    recursion_draws: int = 100
    recursion_horizon: int = 50
    rip_seeds: int = 100
    rip_n: int = 60
    rip_r: int = 2
    rip_m_factor: float = 20.0
    trim_instances: int = 50

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"unknown sampling mode {self.sampling!r}")
        if self.experiment == "phase" and (not self.p_grid or not self.q_grid):
            raise ConfigError("phase needs p_grid and q_grid")
        if self.experiment in ("convergence", "noise"):
            if self.r < 1:
                raise ConfigError(f"{self.experiment} needs an explicit rank r >= 1")
            if not self.oversampling_grid and not self.q_grid:
                raise ConfigError(f"{self.experiment} needs oversampling_grid or q_grid")
        if self.experiment == "noise" and not self.sigma_grid:
            raise ConfigError("noise needs sigma_grid")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for s in self.solvers:
            if s not in ("rgrad", "rcg", "rcg_restarted", "niht"):
                raise ConfigError(f"unknown solver {s!r}")


_LIST_KEYS = {"p_grid", "q_grid", "oversampling_grid", "sigma_grid", "solvers"}
_INT_KEYS = {
    "n", "r", "trials", "max_iterations", "master_seed", "init_L", "stall_window",
    "projection_instances", "procrustes_pairs", "recursion_draws", "recursion_horizon",
    "rip_seeds", "rip_n", "rip_r", "trim_instances",
}
_FLOAT_KEYS = {
    "success_threshold", "residual_tol", "init_mu0_cap", "kappa1", "kappa2",
    "stall_min_progress", "beta_log", "rip_m_factor",
}
_STR_KEYS = {"experiment", "sampling", "init_scheme", "z0_scaling"}


def _parse_list(key: str, raw: str) -> list:
    raw = raw.strip()
    if key == "solvers":
        return [tok.strip() for tok in raw.split(",") if tok.strip()]
    if raw.startswith("logspace(") and raw.endswith(")"):
        args = [tok.strip() for tok in raw[len("logspace("):-1].split(",")]
        if len(args) != 3:
            raise ConfigError(f"logspace needs three args: {raw!r}")
        lo, hi, count = float(args[0]), float(args[1]), int(args[2])
        return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format (# starts a comment)."""
    cfg = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            if key in _LIST_KEYS:
                setattr(cfg, key, _parse_list(key, raw))
            elif key in _INT_KEYS:
                setattr(cfg, key, int(raw))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(raw) if raw != "" else None)
            elif key in _STR_KEYS:
                setattr(cfg, key, raw)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r}") from exc
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())


def derive_seed(master_seed: int, *parts) -> int:
    """Deterministic per-task seed: first 8 bytes of SHA-256 over the
    master seed and the canonical string forms of the coordinates."""
    label = "|".join([str(master_seed), *(str(p) for p in parts)])
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rank_from_q(n: int, q: float, m: int) -> int:
    """Largest integer r >= 1 with (2n - r) r <= q * m, or 0 if none."""
    target = q * m
    if (2 * n - 1) * 1 > target:
        return 0
    r = int(n - math.sqrt(max(n * n - target, 0.0)))
    while r + 1 <= n and (2 * n - (r + 1)) * (r + 1) <= target:
        r += 1
    while r >= 1 and (2 * n - r) * r > target:
        r -= 1
    return r


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _sort_key(row: dict):
    def num(key):
        v = row.get(key)
        return float(v) if v is not None and v != "" else -1.0

    return (
        str(row.get("experiment", "")),
        num("p"), num("q"), num("oversampling"), num("sigma"),
        num("trial"),
        str(row.get("solver", "")),
        str(row.get("row_kind", "")),
    )


def write_csv(path, columns, rows) -> None:
    rows = sorted(rows, key=_sort_key)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])


def write_run_json(out_dir, config: ExperimentConfig, command: str) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": asdict(config),
        "environment": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
    }
    with open(os.path.join(out_dir, "run.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Single-instance pipeline shared by the runners


@dataclass
class InstanceTask:
    experiment: str
    n: int
    r: int
    m: int
    p: float | None
    q: float | None
    oversampling: float | None
    sigma: float | None
    trial: int
    seed: int
    sampling: str
    init_scheme: str
    init_L: int
    init_mu0_cap: float | None
    z0_scaling: str
    solvers: tuple
    residual_tol: float
    max_iterations: int
    success_threshold: float
    kappa1: float
    kappa2: float
    stall_window: int
    stall_min_progress: float
    keep_trace: bool = False
    fixture_dir: str | None = None


def _base_row(task: InstanceTask) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": task.experiment,
        "row_kind": "trial",
        "sampling": task.sampling,
        "init_scheme": task.init_scheme,
        "n": task.n,
        "r": task.r,
        "p": task.p,
        "q": task.q,
        "oversampling": task.oversampling,
        "sigma": task.sigma,
        "snr_db": None if task.sigma in (None, 0.0) else -20.0 * math.log10(task.sigma),
        "trial": task.trial,
        "seed": task.seed,
    }


def _dump_fixture(task: InstanceTask, data: ObservedData) -> None:
    """Save the observations of a failed trial for offline replay."""
    if task.fixture_dir is None:
        return
    os.makedirs(task.fixture_dir, exist_ok=True)
    data.save(os.path.join(task.fixture_dir, f"trial_{task.seed}.txt"))


def run_instance(task: InstanceTask):
    """Generate one instance, run every requested solver on it.

    Returns (result_rows, trace_rows).  Solver failures become rows with
    the failure status plus a serialized observation fixture; they never
    abort the sweep.
    """
    X = random_lowrank(task.n, task.r, derive_seed(task.seed, "matrix"))
    sampler = sample_without_replacement if task.sampling == "without_replacement" \
        else sample_with_replacement
    S = sampler(task.n, task.m, derive_seed(task.seed, "omega"))
    data = ObservedData.observe(S, X)
    if task.sigma:
        rng = np.random.default_rng(derive_seed(task.seed, "noise"))
        w = rng.standard_normal(data.values.size)
        noise = task.sigma * data.operator_norm_of_observations() * w / np.linalg.norm(w)
        data = ObservedData(S, data.values + noise)

    inc = incoherence_report(X, S)
    kappa = spectrum_summary(X).kappa
    rows, trace_rows = [], []

    try:
        if task.init_scheme == "resampled_trimmed":
            cap = task.init_mu0_cap if task.init_mu0_cap is not None else inc.mu0
            opts = initialization.InitOptions(
                scheme="resampled_trimmed", L=task.init_L, mu0_cap=cap,
                seed=derive_seed(task.seed, "partition"), z0_scaling=task.z0_scaling,
            )
            X0 = initialization.init_resampled(data, task.r, opts)
        else:
            X0 = initialization.init_one_step(data, task.r)
    except LrmcError as exc:
        _dump_fixture(task, data)
        for solver in task.solvers:
            row = _base_row(task)
            row.update(solver=solver, status=f"init_failure:{type(exc).__name__}",
                       success=False, rel_error=None, observed_residual=None,
                       iterations=0, restarts=0, mu0=inc.mu0, mu1=inc.mu1,
                       kappa=kappa, wall_time_s=0.0)
            rows.append(row)
        return rows, trace_rows

    for solver in task.solvers:
        options = SolverOptions(
            variant=solver,
            max_iterations=task.max_iterations,
            rel_residual_tol=task.residual_tol,
            kappa1=task.kappa1,
            kappa2=task.kappa2,
            stall_window=task.stall_window or None,
            stall_min_progress=task.stall_min_progress,
        )
        t0 = time.perf_counter()
        try:
            Xh, trace = solve(data, task.r, X0, options)
            status = trace.status
        except LrmcError as exc:
            trace = getattr(exc, "trace", None)
            Xh = None
            status = trace.status if trace is not None else "numerical_error"
            _dump_fixture(task, data)
        wall = time.perf_counter() - t0

        row = _base_row(task)
        if Xh is not None:
            err = rel_error(Xh, X)
            last = trace.records[-1].rel_residual if trace.records else None
            row.update(success=bool(err <= task.success_threshold), rel_error=err,
                       observed_residual=last)
        else:
            row.update(success=False, rel_error=None, observed_residual=None)
        row.update(solver=solver, iterations=trace.iterations if trace else 0,
                   restarts=trace.restart_count if trace else 0, status=status,
                   mu0=inc.mu0, mu1=inc.mu1, kappa=kappa, wall_time_s=wall)
        rows.append(row)

        if task.keep_trace and trace is not None:
            for rec in trace.records:
                trace_rows.append({
                    "schema_version": SCHEMA_VERSION,
                    "experiment": task.experiment,
                    "solver": solver,
                    "n": task.n, "r": task.r, "p": task.p, "q": task.q,
                    "oversampling": task.oversampling, "sigma": task.sigma,
                    "trial": task.trial, "seed": task.seed,
                    "iteration": rec.iteration, "rel_residual": rec.rel_residual,
                    "alpha": rec.alpha, "beta": rec.beta,
                    "restarted": rec.restarted, "wall_time_s": rec.wall_time,
                })
    return rows, trace_rows


def _run_instance_single_thread(task: InstanceTask):
    # Worker processes pin BLAS to one thread each; otherwise every worker
    # spawns a full thread pool and they thrash the shared cores.
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return run_instance(task)
    with threadpool_limits(limits=1):
        return run_instance(task)


def _run_tasks(tasks, threads: int):
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_instance_single_thread, tasks))
    return [run_instance(t) for t in tasks]


# ---------------------------------------------------------------------------
# Runners


def run_phase(config: ExperimentConfig, out_dir, threads: int = 1,
              command: str = "") -> dict:
    """Success-rate sweep over the (p, q) grid, rank derived per cell."""
    os.makedirs(out_dir, exist_ok=True)
    n = config.n
    rows, tasks = [], []
    for p in config.p_grid:
        m = int(round(p * n * n))
        for q in config.q_grid:
            r = derive_rank_from_q(n, q, m) if q <= 1.0 else 0
            if q > 1.0 or r < 1:
                row = {
                    "schema_version": SCHEMA_VERSION, "experiment": "phase",
                    "row_kind": "skipped", "sampling": config.sampling,
                    "init_scheme": config.init_scheme, "n": n, "p": p, "q": q,
                    "status": "skipped",
                }
                rows.append(row)
                continue
            for trial in range(config.trials):
                seed = derive_seed(config.master_seed, "phase", repr(p), repr(q), trial)
                tasks.append(InstanceTask(
                    experiment="phase", n=n, r=r, m=m, p=p, q=q, oversampling=None,
                    sigma=None, trial=trial, seed=seed, sampling=config.sampling,
                    init_scheme=config.init_scheme, init_L=config.init_L,
                    init_mu0_cap=config.init_mu0_cap, z0_scaling=config.z0_scaling,
                    solvers=tuple(config.solvers), residual_tol=config.residual_tol,
                    max_iterations=config.max_iterations,
                    success_threshold=config.success_threshold,
                    kappa1=config.kappa1, kappa2=config.kappa2,
                    stall_window=config.stall_window,
                    stall_min_progress=config.stall_min_progress,
                    fixture_dir=os.path.join(out_dir, "fixtures"),
                ))
    for result_rows, _ in _run_tasks(tasks, threads):
        rows.extend(result_rows)
    write_csv(os.path.join(out_dir, "results.csv"), RESULTS_COLUMNS, rows)
    write_run_json(out_dir, config, command)
    return {"rows": len(rows)}


def _ratio_tasks(config: ExperimentConfig, experiment: str, sigma_grid, keep_trace: bool,
                 fixture_dir: str | None = None):
    """Tasks for the fixed-rank experiments driven by oversampling ratios."""
    n, r = config.n, config.r
    dim = (2 * n - r) * r
    ratios = list(config.oversampling_grid) or [1.0 / q for q in config.q_grid]
    tasks = []
    for ratio in ratios:
        m = int(round(ratio * dim))
        p = m / (n * n)
        q = dim / m
        for sigma in sigma_grid:
            for trial in range(config.trials):
                seed = derive_seed(config.master_seed, experiment, repr(ratio),
                                   repr(sigma), trial)
                tasks.append(InstanceTask(
                    experiment=experiment, n=n, r=r, m=m, p=p, q=q, oversampling=ratio,
                    sigma=sigma, trial=trial, seed=seed, sampling=config.sampling,
                    init_scheme=config.init_scheme, init_L=config.init_L,
                    init_mu0_cap=config.init_mu0_cap, z0_scaling=config.z0_scaling,
                    solvers=tuple(config.solvers), residual_tol=config.residual_tol,
                    max_iterations=config.max_iterations,
                    success_threshold=config.success_threshold,
                    kappa1=config.kappa1, kappa2=config.kappa2,
                    stall_window=config.stall_window,
                    stall_min_progress=config.stall_min_progress,
                    keep_trace=keep_trace,
                    fixture_dir=fixture_dir,
                ))
    return tasks


def _summary_rows(result_rows) -> list[dict]:
    """One mean/stddev row per (grid cell, solver) across trials."""
    groups: dict[tuple, list[dict]] = {}
    for row in result_rows:
        if row.get("row_kind") != "trial":
            continue
        key = (row.get("p"), row.get("q"), row.get("oversampling"), row.get("sigma"),
               row.get("solver"))
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        iters = np.array([m["iterations"] for m in members], dtype=float)
        errs = np.array([m["rel_error"] for m in members
                         if m["rel_error"] is not None], dtype=float)
        summary = dict(members[0])
        summary.update(
            row_kind="summary", trial=-1, seed=None, status=None,
            iterations=float(np.mean(iters)), iterations_std=float(np.std(iters)),
            rel_error=float(np.mean(errs)) if errs.size else None,
            observed_residual=None,
            success=float(np.mean([1.0 if m["success"] else 0.0 for m in members])),
            restarts=float(np.mean([m["restarts"] for m in members])),
            wall_time_s=float(np.mean([m["wall_time_s"] for m in members])),
        )
        out.append(summary)
    return out


def run_convergence(config: ExperimentConfig, out_dir, threads: int = 1,
                    command: str = "") -> dict:
    """Paired solver comparison at fixed rank; emits per-iteration traces."""
    os.makedirs(out_dir, exist_ok=True)
    tasks = _ratio_tasks(config, "convergence", [None], keep_trace=True,
                         fixture_dir=os.path.join(out_dir, "fixtures"))
    rows, trace_rows = [], []
    for result_rows, t_rows in _run_tasks(tasks, threads):
        rows.extend(result_rows)
        trace_rows.extend(t_rows)
    rows.extend(_summary_rows(rows))
    write_csv(os.path.join(out_dir, "results.csv"), RESULTS_COLUMNS, rows)
    trace_rows.sort(key=lambda r: (_sort_key(r), r["iteration"]))
    with open(os.path.join(out_dir, "traces.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACES_COLUMNS)
        for row in trace_rows:
            writer.writerow([_fmt(row.get(col)) for col in TRACES_COLUMNS])
    write_run_json(out_dir, config, command)
    return {"rows": len(rows), "trace_rows": len(trace_rows)}


def run_noise(config: ExperimentConfig, out_dir, threads: int = 1,
              command: str = "") -> dict:
    """Recovery error under additive noise on the observed entries."""
    os.makedirs(out_dir, exist_ok=True)
    tasks = _ratio_tasks(config, "noise", list(config.sigma_grid), keep_trace=False,
                         fixture_dir=os.path.join(out_dir, "fixtures"))
    rows = []
    for result_rows, _ in _run_tasks(tasks, threads):
        rows.extend(result_rows)
    rows.extend(_summary_rows(rows))
    write_csv(os.path.join(out_dir, "results.csv"), RESULTS_COLUMNS, rows)
    write_run_json(out_dir, config, command)
    return {"rows": len(rows)}


# ---------------------------------------------------------------------------
# Verify: drive the diagnostics sweeps and bound checks


class _VerifyLog:
    def __init__(self):
        self.lines: list[str] = []
        self.violations: list[dict] = []

    def record(self, check: str, ok: bool, detail: str, replay: dict | None = None):
        self.lines.append(f"check={check} ok={1 if ok else 0} {detail}")
        if not ok:
            self.violations.append({"check": check, "detail": detail,
                                    "replay": replay or {}})

    def summary(self, check: str, ok_count: int, total: int, required: int) -> bool:
        passed = ok_count >= required
        self.lines.append(
            f"summary check={check} ok={ok_count}/{total} required={required} "
            f"pass={1 if passed else 0}"
        )
        if not passed:
            self.violations.append({
                "check": check,
                "detail": f"only {ok_count}/{total} within bound, required {required}",
                "replay": {},
            })
        return passed


def _verify_constants(config: ExperimentConfig, log: _VerifyLog) -> None:
    grid = [(1e-3, 0.1, 1.0), (5e-3, 0.1, 1.0), (0.01, 0.1, 1.0), (0.02, 0.0, 0.0)]
    for eps0, k1, k2 in grid:
        try:
            c = convergence_constants(eps0, k1, k2, config.beta_log)
        except RegimeError as exc:
            log.record("constants_table", False, f"eps0={eps0} error={exc}")
            continue
        detail = (f"eps0={eps0} kappa1={k1} kappa2={k2} nu_g={c.nu_g!r} "
                  f"tau1={c.tau1!r} tau2={c.tau2!r} nu_cg={c.nu_cg!r}")
        ok = True
        if (eps0, k1, k2) == (0.01, 0.1, 1.0):
            ok = c.tau_sum < 1.0 and c.nu_cg < 1.0
        if k1 == 0.0 and k2 == 0.0:
            ok = c.nu_cg == c.nu_g
        log.record("constants_table", ok, detail,
                   {"epsilon0": eps0, "kappa1": k1, "kappa2": k2})


def _verify_projection_bounds(config: ExperimentConfig, log: _VerifyLog) -> int:
    rng = np.random.default_rng(derive_seed(config.master_seed, "verify", "projection"))
    ok_count = 0
    for i in range(config.projection_instances):
        n = int(rng.integers(8, 41))
        r = int(rng.integers(1, 5))
        sa = derive_seed(config.master_seed, "projection", i, "a")
        sb = derive_seed(config.master_seed, "projection", i, "b")
        report = check_projection_bounds(random_lowrank(n, r, sa), random_lowrank(n, r, sb))
        ok_count += report.ok
        if not report.ok:
            worst = report.violations[0]
            log.record("projection_bounds", False,
                       f"instance={i} n={n} r={r} {worst.name} lhs={worst.lhs!r} rhs={worst.rhs!r}",
                       {"n": n, "r": r, "seed_a": sa, "seed_b": sb})
    log.summary("projection_bounds", ok_count, config.projection_instances,
                config.projection_instances)
    return ok_count


def _verify_procrustes(config: ExperimentConfig, log: _VerifyLog) -> int:
    rng = np.random.default_rng(derive_seed(config.master_seed, "verify", "procrustes"))
    ok_count = 0
    for i in range(config.procrustes_pairs):
        n = int(rng.integers(4, 51))
        r = int(rng.integers(1, min(n, 5) + 1))
        A = np.linalg.qr(rng.standard_normal((n, r)))[0]
        B = np.linalg.qr(rng.standard_normal((n, r)))[0]
        res = procrustes_align(A, B)
        ok_count += res.ok
        if not res.ok:
            log.record("procrustes", False,
                       f"pair={i} n={n} r={r} chordal={res.chordal!r} projector={res.projector_dist!r}",
                       {"n": n, "r": r, "pair": i})
    log.summary("procrustes", ok_count, config.procrustes_pairs, config.procrustes_pairs)
    return ok_count


def _verify_recursion(config: ExperimentConfig, log: _VerifyLog) -> int:
    rng = np.random.default_rng(derive_seed(config.master_seed, "verify", "recursion"))
    ok_count = 0
    for i in range(config.recursion_draws):
        rho1 = float(rng.uniform(0.01, 0.3))
        rho2 = rho1 + float(rng.uniform(0.0, 0.3))
        gamma = float(rng.uniform(0.01, 0.3))
        report = check_recursion(rho1, rho2, gamma, 1.0, config.recursion_horizon)
        ok_count += report.ok
        if not report.ok:
            log.record("recursion", False,
                       f"draw={i} rho1={rho1!r} rho2={rho2!r} gamma={gamma!r}",
                       {"rho1": rho1, "rho2": rho2, "gamma": gamma})
    log.summary("recursion", ok_count, config.recursion_draws, config.recursion_draws)
    return ok_count


def _verify_rip(config: ExperimentConfig, log: _VerifyLog) -> tuple[int, int]:
    n, r = config.rip_n, config.rip_r
    m = int(round(config.rip_m_factor * n * r * math.log(n)))
    required = math.ceil(0.95 * config.rip_seeds)
    ok_local = ok_asym = 0
    for i in range(config.rip_seeds):
        X = random_lowrank(n, r, derive_seed(config.master_seed, "rip", i, "x"))
        Xl = random_lowrank(n, r, derive_seed(config.master_seed, "rip", i, "xl"))
        S = sample_with_replacement(n, m, derive_seed(config.master_seed, "rip", i, "omega"))
        est = estimate_local_rip(X, S, beta_log=config.beta_log)
        within = est.within_bound
        ok_local += within
        if not within:
            log.record("local_rip", False,
                       f"seed_index={i} value={est.value!r} bound={est.theoretical_bound!r} "
                       f"converged={est.converged}",
                       {"n": n, "r": r, "m": m, "seed_index": i})
        est_a = estimate_asymmetric_rip(Xl, X, S, beta_log=config.beta_log)
        within_a = est_a.within_bound
        ok_asym += within_a
        if not within_a:
            log.record("asymmetric_rip", False,
                       f"seed_index={i} value={est_a.value!r} bound={est_a.theoretical_bound!r} "
                       f"converged={est_a.converged}",
                       {"n": n, "r": r, "m": m, "seed_index": i})
    log.summary("local_rip", ok_local, config.rip_seeds, required)
    log.summary("asymmetric_rip", ok_asym, config.rip_seeds, required)
    return ok_local, ok_asym


def _verify_trim(config: ExperimentConfig, log: _VerifyLog) -> int:
    """Trimmed factors must stay within 10/9 of the incoherence cap.

    Instances are built to be discriminating: the heaviest row of one
    factor is pushed past the slack band by a tangent bump that stays
    inside the trim lemma's radius (mild prescribed spectra keep that
    radius workable).  Instances where the bump fails to cross the band
    are skipped, so a trim that ignores its cap cannot pass by accident.
    """
    n, r = config.rip_n, config.rip_r
    slack = 1.0 + 1e-10
    ok_count = total = 0

    def spiked_instance(X, side):
        mu0 = incoherence_report(X).mu0
        cap = math.sqrt(mu0 * r / n)
        radius = float(X.sigma[r - 1]) / (10.0 * math.sqrt(2.0))
        F = X.U if side == "u" else X.V
        i = int(np.argmax(np.sum(F * F, axis=1)))
        bump = np.zeros((n, r))
        bump[i] = F[i] / np.linalg.norm(F[i])
        bump -= F @ (F.T @ bump)
        if side == "u":
            T = TangentVector(X.U, X.V, np.zeros((r, r)), np.zeros((n, r)), bump)
        else:
            T = TangentVector(X.U, X.V, np.zeros((r, r)), bump, np.zeros((n, r)))
        T = T.scaled(0.9 * radius / T.norm())
        Z = retract(X, T)
        if rel_error(Z, X) * X.frob_norm() > radius:
            return None
        spiked = max(
            float(np.max(np.linalg.norm(Z.U, axis=1))),
            float(np.max(np.linalg.norm(Z.V, axis=1))),
        )
        if spiked <= (10.0 / 9.0) * cap * slack:
            return None
        return Z, mu0, cap

    spectrum = np.linspace(1.5, 1.0, r)
    for i in range(config.trim_instances):
        X = random_lowrank_with_spectrum(
            n, r, spectrum, derive_seed(config.master_seed, "trim", i))
        case = None
        for side in ("u", "v"):
            case = spiked_instance(X, side)
            if case is not None:
                break
        if case is None:
            continue
        Z, mu0, cap = case
        total += 1
        Zt = initialization.trim(Z, mu0)
        worst = max(
            float(np.max(np.linalg.norm(Zt.U, axis=1))),
            float(np.max(np.linalg.norm(Zt.V, axis=1))),
        )
        bound = (10.0 / 9.0) * cap * slack
        ok = worst <= bound
        ok_count += ok
        if not ok:
            log.record("trim_incoherence", False,
                       f"instance={i} worst_row_norm={worst!r} bound={bound!r}",
                       {"n": n, "r": r, "seed_index": i})
    if total == 0:
        log.record("trim_incoherence", False,
                   f"no discriminating instance among {config.trim_instances}")
    log.summary("trim_incoherence", ok_count, total, total)
    return ok_count


def run_verify(config: ExperimentConfig, out_dir, threads: int = 1,
               command: str = "") -> int:
    """Run every diagnostics sweep; returns 0 on success, 1 on violation."""
    os.makedirs(out_dir, exist_ok=True)
    log = _VerifyLog()
    _verify_constants(config, log)
    _verify_projection_bounds(config, log)
    _verify_procrustes(config, log)
    _verify_recursion(config, log)
    _verify_rip(config, log)
    _verify_trim(config, log)
    with open(os.path.join(out_dir, "verify.txt"), "w") as f:
        f.write("\n".join(log.lines) + "\n")
    if log.violations:
        with open(os.path.join(out_dir, "violations.json"), "w") as f:
            json.dump(log.violations, f, indent=2, sort_keys=True)
            f.write("\n")
    write_run_json(out_dir, config, command)
    return 1 if log.violations else 0
