"""Initial guesses: one-step hard thresholding and the resampled,
trimmed gradient scheme.

The one-step initializer truncates the rescaled observation matrix.
The resampled scheme splits the samples into disjoint groups, uses the
first group for the same one-step start, then alternates row-norm
trimming with one fixed-stepsize projected gradient step per fresh
group, so each round sees measurements independent of its iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InitFailureError, RankCollapseError
from .linalg import LowRankMatrix, _fix_signs, thin_qr, truncated_svd
from .sampling import ObservedData, entry_values, partition_observed
from .tangent import project_to_tangent, retract

__all__ = ["InitOptions", "InitInfo", "init_one_step", "trim", "init_resampled", "resampled_rounds"]

SCHEMES = ("one_step_ht", "resampled_trimmed")
Z0_SCALINGS = ("inverse_p", "literal")


@dataclass
class InitOptions:
    scheme: str = "one_step_ht"
    L: int = 1
    mu0_cap: float | None = None
    seed: int = 0
    # The printed resampled scheme scales the first truncation by m/n^2,
    # which is inconsistent with the 1/p scaling used by the one-step
    # initializer and the error analysis; inverse_p is the self-consistent
    # default, literal reproduces the printed text.
    z0_scaling: str = "inverse_p"
    svd_tol: float = 1e-10
    svd_max_iterations: int = 300

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.z0_scaling not in Z0_SCALINGS:
            raise ValueError(f"unknown z0_scaling {self.z0_scaling!r}")
        if self.scheme == "resampled_trimmed":
            if self.L < 1:
                raise ValueError("resampled_trimmed needs L >= 1")
            if self.mu0_cap is not None and self.mu0_cap <= 0:
                raise ValueError("mu0_cap must be positive")


@dataclass
class InitInfo:
    group_sizes: list[int] = field(default_factory=list)
    rounds: list[int] = field(default_factory=list)  # group index consumed per round


def _truncate_observations(data: ObservedData, rank: int, scale: float,
                           tol: float, max_iterations: int, seed: int) -> LowRankMatrix:
    S = data.sampling
    A = S.sparse_with(S.mult * data.values * scale)
    U, s, V, _, _, _ = truncated_svd(A, rank, tol=tol, max_iterations=max_iterations, seed=seed)
    return LowRankMatrix(S.n_rows, S.n_cols, rank, U, s, V)


def init_one_step(data: ObservedData, rank: int, tol: float = 1e-10,
                  max_iterations: int = 300, seed: int = 0) -> LowRankMatrix:
    """Rank-r truncation of the observation matrix rescaled by 1/p."""
    if data.sampling.m < 1:
        raise ValueError("observed data is empty")
    return _truncate_observations(data, rank, 1.0 / data.sampling.p, tol, max_iterations, seed)


def trim_factors(Z: LowRankMatrix, mu0_cap: float):
    """Row-capped factors (A, sigma, B) with A sigma B^T the trimmed value.

    Each row of U and V above sqrt(mu0_cap * r / n) is rescaled onto
    that sphere without changing direction; zero rows stay zero.
    """
    if mu0_cap <= 0:
        raise ValueError("mu0_cap must be positive")
    r = Z.rank
    cap_u = np.sqrt(mu0_cap * r / Z.n_rows)
    cap_v = np.sqrt(mu0_cap * r / Z.n_cols)

    def capped(F: np.ndarray, cap: float) -> np.ndarray:
        norms = np.sqrt(np.sum(F * F, axis=1))
        scale = np.ones_like(norms)
        over = norms > cap
        scale[over] = cap / norms[over]
        return F * scale[:, None]

    return capped(Z.U, cap_u), Z.sigma, capped(Z.V, cap_v)


def trim(Z: LowRankMatrix, mu0_cap: float) -> LowRankMatrix:
    """Cap the factor row norms, then restore a valid factored SVD.

    The capped product is re-orthonormalized through two thin QRs and
    one r x r dense SVD.
    """
    A, sigma, B = trim_factors(Z, mu0_cap)
    Qa, Ra = thin_qr(A)
    Qb, Rb = thin_qr(B)
    u, s, vt = np.linalg.svd(Ra @ (sigma[:, None] * Rb.T))
    U, V = _fix_signs(Qa @ u, Qb @ vt.T)
    return LowRankMatrix(Z.n_rows, Z.n_cols, Z.rank, U, s.copy(), V)


def resampled_rounds(groups: list[ObservedData], rank: int, mu0_cap: float,
                     z0_scaling: str = "inverse_p", svd_tol: float = 1e-10,
                     svd_max_iterations: int = 300, svd_seed: int = 0,
                     return_info: bool = False):
    """Run the trimmed gradient rounds on pre-split observation groups.

    Group 0 seeds the iterate; each subsequent group drives exactly one
    fixed-stepsize projected gradient step at stepsize 1/p of that group.
    """
    if len(groups) < 2:
        raise ValueError("need at least two groups (L >= 1)")
    info = InitInfo(group_sizes=[g.sampling.m for g in groups])
    g0 = groups[0]
    scale = (1.0 / g0.sampling.p) if z0_scaling == "inverse_p" else g0.sampling.p
    Z = _truncate_observations(g0, rank, scale, svd_tol, svd_max_iterations, svd_seed)
    if Z.sigma[0] == 0.0 or Z.sigma[rank - 1] <= 1e-12 * Z.sigma[0]:
        raise InitFailureError(
            f"group 0 with {g0.sampling.m} draws does not span rank {rank}"
        )
    for l, g in enumerate(groups[1:]):
        Zh = trim(Z, mu0_cap)
        S = g.sampling
        diff = g.values - entry_values(S, Zh)
        G = S.sparse_with(S.mult * diff / S.p)
        T = project_to_tangent(Zh, G)
        try:
            Z = retract(Zh, T)
        except RankCollapseError as exc:
            raise InitFailureError(
                f"round {l} collapsed below rank {rank} (group of {S.m} draws)"
            ) from exc
        info.rounds.append(l + 1)
    if return_info:
        return Z, info
    return Z


def init_resampled(data: ObservedData, rank: int, options: InitOptions,
                   return_info: bool = False):
    """Resampled trimmed initializer on a single observation set.

    Splits the draws into L+1 disjoint groups with the options seed and
    runs the rounds; requires mu0_cap (the incoherence level the trim
    enforces) to be set.
    """
    if options.mu0_cap is None:
        raise ValueError("init_resampled requires mu0_cap")
    if data.sampling.m < options.L + 1:
        raise ValueError("fewer draws than groups")
    groups = partition_observed(data, options.L, options.seed)
    return resampled_rounds(
        groups, rank, options.mu0_cap, z0_scaling=options.z0_scaling,
        svd_tol=options.svd_tol, svd_max_iterations=options.svd_max_iterations,
        return_info=return_info,
    )
