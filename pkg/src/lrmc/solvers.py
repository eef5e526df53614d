"""Riemannian gradient descent, conjugate gradient descent, and NIHT.

All steps consume only observed entries: the residual is assembled as a
sparse matrix on the sampling support, stepsizes come from inner
products evaluated entrywise on that support, and the update is the
structured retraction.  The solver never reads the ground truth; the
harness computes full errors separately.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateStepsizeError,
    RankCollapseError,
    SvdConvergenceError,
)
from .linalg import LowRankMatrix, LowRankPlusSparse, truncated_svd
from .sampling import ObservedData, entry_values
from .tangent import (
    TangentVector,
    inner,
    project_to_tangent,
    retract,
    tangent_entry_values,
    transport,
)

__all__ = [
    "SolverOptions",
    "StepInfo",
    "IterationRecord",
    "SolverTrace",
    "rgrad_step",
    "rcg_step",
    "niht_step",
    "solve",
]

VARIANTS = ("rgrad", "rcg", "rcg_restarted", "niht")

# Below this, a stepsize quadratic form counts as numerically empty.
_DENOM_FLOOR = 1e-300


@dataclass
class SolverOptions:
    variant: str = "rgrad"
    max_iterations: int = 500
    rel_residual_tol: float = 1e-9
    kappa1: float = 0.1
    kappa2: float = 1.0
    # Optional early stop when the best residual improves by less than
    # stall_min_progress over stall_window iterations; disabled by default.
    stall_window: int | None = None
    stall_min_progress: float = 0.01
    svd_seed: int = 0  # NIHT truncated-SVD start

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.rel_residual_tol <= 0:
            raise ValueError("rel_residual_tol must be positive")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("restart constants must be nonnegative")


@dataclass
class StepInfo:
    alpha: float
    beta: float = 0.0
    restarted: bool = False


@dataclass
class IterationRecord:
    iteration: int
    rel_residual: float
    alpha: float
    beta: float
    restarted: bool
    wall_time: float


@dataclass
class SolverTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "max_iterations"
    iterates: list[LowRankMatrix] | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def restart_count(self) -> int:
        return sum(1 for rec in self.records if rec.restarted)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.rel_residual for rec in self.records])


def _weighted_quadratic(mult: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """<A, P_Omega(B)> evaluated from plain entry values on the support."""
    return float(np.sum(mult * a * b))


def _check_denominator(value: float) -> float:
    if not np.isfinite(value) or value <= 0.0 or value < _DENOM_FLOOR:
        raise DegenerateStepsizeError(
            f"stepsize denominator {value!r} is nonpositive or numerically zero; "
            "the sampled entries do not see the tangent direction"
        )
    return value


def _residual_values(X: LowRankMatrix, data: ObservedData, x_entries: np.ndarray | None):
    if x_entries is None:
        x_entries = entry_values(data.sampling, X)
    return data.values - x_entries, x_entries


def _fixpoint_or_degenerate(diff: np.ndarray):
    """A vanishing projected gradient is a fixpoint when the residual is
    zero too; otherwise the sampling cannot see the tangent space."""
    if np.all(diff == 0.0):
        return True
    raise DegenerateStepsizeError(
        "projected gradient is zero while the observed residual is not; "
        "the sampling does not see the tangent space at this iterate"
    )


def rgrad_step(X: LowRankMatrix, data: ObservedData, x_entries: np.ndarray | None = None):
    """One Riemannian gradient step with the steepest tangent stepsize.

    Returns the retracted iterate and a StepInfo with the stepsize used.
    """
    S = data.sampling
    diff, _ = _residual_values(X, data, x_entries)
    G = S.sparse_with(S.mult * diff)
    Tg = project_to_tangent(X, G)
    num = inner(Tg, Tg)
    if num == 0.0 and _fixpoint_or_degenerate(diff):
        return X, StepInfo(alpha=0.0)
    vg = tangent_entry_values(S, Tg)
    den = _check_denominator(_weighted_quadratic(S.mult, vg, vg))
    alpha = num / den
    return retract(X, Tg.scaled(alpha)), StepInfo(alpha=alpha)


def rcg_step(
    X: LowRankMatrix,
    data: ObservedData,
    prev_direction: TangentVector | None,
    options: SolverOptions,
    x_entries: np.ndarray | None = None,
):
    """One conjugate gradient step; returns (iterate, direction, info).

    The previous search direction is transported by re-projection onto
    the current tangent space.  With no previous direction the step
    reduces exactly to the gradient step.  The restarted variant zeroes
    the orthogonalization weight whenever the projected gradient is
    insufficiently orthogonal to, or too large against, the transported
    direction.
    """
    S = data.sampling
    diff, _ = _residual_values(X, data, x_entries)
    G = S.sparse_with(S.mult * diff)
    Tg = project_to_tangent(X, G)
    ng2 = inner(Tg, Tg)
    if ng2 == 0.0 and _fixpoint_or_degenerate(diff):
        return X, (prev_direction if prev_direction is not None else Tg), StepInfo(alpha=0.0)
    vg = tangent_entry_values(S, Tg)

    # With no previous direction (the l = 0 convention) the weight is zero
    # and the step is exactly the gradient step; that is not a fired restart.
    beta = 0.0
    restarted = False
    Tp = None
    if prev_direction is not None:
        Tp = transport(X, prev_direction)
        np2 = inner(Tp, Tp)
        if np2 == 0.0:
            restarted = True
        else:
            if options.variant == "rcg_restarted":
                cross = inner(Tg, Tp)
                if abs(cross) > options.kappa1 * np.sqrt(ng2 * np2):
                    restarted = True
                elif np.sqrt(ng2) > options.kappa2 * np.sqrt(np2):
                    restarted = True
            if not restarted:
                vp = tangent_entry_values(S, Tp)
                den_beta = _check_denominator(_weighted_quadratic(S.mult, vp, vp))
                beta = -_weighted_quadratic(S.mult, vg, vp) / den_beta

    if beta != 0.0 and Tp is not None:
        P = Tg.add(Tp, beta)
        vP = vg + beta * vp
    else:
        P = Tg
        vP = vg
    den_alpha = _check_denominator(_weighted_quadratic(S.mult, vP, vP))
    alpha = inner(Tg, P) / den_alpha
    return retract(X, P.scaled(alpha)), P, StepInfo(alpha=alpha, beta=beta, restarted=restarted)


def niht_step(
    X: LowRankMatrix,
    data: ObservedData,
    x_entries: np.ndarray | None = None,
    svd_seed: int = 0,
):
    """Normalized IHT baseline: full-space gradient step, then truncation.

    Uses the same tangent-restricted stepsize as the Riemannian step so
    the baselines stay comparable; the truncation of the rank-r plus
    sparse update goes through the block power iteration.
    """
    S = data.sampling
    diff, _ = _residual_values(X, data, x_entries)
    G = S.sparse_with(S.mult * diff)
    Tg = project_to_tangent(X, G)
    num = inner(Tg, Tg)
    if num == 0.0 and _fixpoint_or_degenerate(diff):
        return X, StepInfo(alpha=0.0)
    vg = tangent_entry_values(S, Tg)
    den = _check_denominator(_weighted_quadratic(S.mult, vg, vg))
    alpha = num / den
    W = LowRankPlusSparse(X, alpha * G)
    U, s, V, _, _, _ = truncated_svd(W, X.rank, seed=svd_seed)
    X_new = LowRankMatrix(X.n_rows, X.n_cols, X.rank, U, s, V)
    return X_new, StepInfo(alpha=alpha)


def solve(
    data: ObservedData,
    rank: int,
    X0: LowRankMatrix,
    options: SolverOptions,
    keep_iterates: bool = False,
):
    """Iterate the chosen step until the observed residual tolerance.

    The stopping residual is ||P_Omega(X - X_l)||_F / ||P_Omega(X)||_F,
    both norms taken of the operator's scaled output.  One trace record
    is appended per completed iteration, holding the residual of the new
    iterate.  Step failures propagate with the trace attached to the
    exception (``exc.trace``).
    """
    if X0.rank != rank:
        raise ValueError(f"X0 has rank {X0.rank}, expected {rank}")
    S = data.sampling
    norm0 = data.operator_norm_of_observations()
    if norm0 == 0.0:
        raise ValueError("observed data is identically zero")

    trace = SolverTrace(iterates=[X0] if keep_iterates else None)
    X = X0
    x_entries = entry_values(S, X)
    resid = float(np.linalg.norm(S.mult * (data.values - x_entries))) / norm0
    if resid <= options.rel_residual_tol:
        trace.status = "converged"
        return X, trace

    prev_direction: TangentVector | None = None
    best_resid = resid
    best_history: list[float] = [best_resid]
    for it in range(options.max_iterations):
        t0 = time.perf_counter()
        try:
            if options.variant == "rgrad":
                X_new, info = rgrad_step(X, data, x_entries)
            elif options.variant in ("rcg", "rcg_restarted"):
                X_new, prev_direction, info = rcg_step(X, data, prev_direction, options, x_entries)
            else:
                X_new, info = niht_step(X, data, x_entries, svd_seed=options.svd_seed)
        except (RankCollapseError, DegenerateStepsizeError, SvdConvergenceError) as exc:
            trace.status = "rank_collapse" if isinstance(exc, RankCollapseError) else "numerical_error"
            exc.trace = trace
            raise
        x_entries = entry_values(S, X_new)
        resid = float(np.linalg.norm(S.mult * (data.values - x_entries))) / norm0
        trace.records.append(
            IterationRecord(it, resid, info.alpha, info.beta, info.restarted,
                            time.perf_counter() - t0)
        )
        X = X_new
        if keep_iterates:
            trace.iterates.append(X)
        if resid <= options.rel_residual_tol:
            trace.status = "converged"
            return X, trace
        best_resid = min(best_resid, resid)
        best_history.append(best_resid)
        if options.stall_window is not None and len(best_history) > options.stall_window:
            window_ago = best_history[-1 - options.stall_window]
            if window_ago > 0 and best_history[-1] >= window_ago * (1.0 - options.stall_min_progress):
                trace.status = "max_iterations"
                return X, trace
    trace.status = "max_iterations"
    return X, trace
