"""Numerical checkers for the quantitative guarantees.

These routines evaluate, on concrete instances, the inequalities and
constants that the convergence analysis relies on: projector distance
bounds, the local and asymmetric restricted isometries of the rescaled
sampling operator, the scalar recursion behind the conjugate gradient
rate, the chordal-vs-projector distance bound, and the contraction
constants themselves.  Everything is report-only; violations are
flagged, not raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RegimeError
from .linalg import LowRankMatrix
from .sampling import SamplingSet, incoherence_report
from .tangent import (
    TangentVector,
    canonicalize,
    inner,
    project_to_tangent,
    random_tangent,
    sample_tangent,
)

__all__ = [
    "ConvergenceConstants",
    "convergence_constants",
    "BoundCheck",
    "ProjectionBoundsReport",
    "check_projection_bounds",
    "RipEstimate",
    "estimate_local_rip",
    "estimate_asymmetric_rip",
    "RecursionReport",
    "check_recursion",
    "ProcrustesResult",
    "procrustes_align",
]

# Comparison slack for report checks: the inequalities are exact in
# exact arithmetic, this only absorbs roundoff on ~equal sides.
_SLACK_REL = 1e-9
_SLACK_ABS = 1e-12


def _leq(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1.0 + _SLACK_REL) + _SLACK_ABS


@dataclass
class ConvergenceConstants:
    epsilon0: float
    kappa1: float
    kappa2: float
    beta_log: float
    nu_g: float
    tau1: float
    tau2: float
    nu_cg: float

    @property
    def tau_sum(self) -> float:
        return self.tau1 + self.tau2

    @property
    def cg_contractive(self) -> bool:
        return self.tau_sum < 1.0 and self.nu_cg < 1.0

    @property
    def g_contractive(self) -> bool:
        return self.nu_g < 1.0


def convergence_constants(epsilon0: float, kappa1: float, kappa2: float,
                          beta_log: float = 2.0) -> ConvergenceConstants:
    """Contraction constants of the gradient and conjugate gradient rates.

    nu_g = 18 e0 / (1 - 4 e0) drives the gradient rate; tau1, tau2 and
    nu_cg = (tau1 + sqrt(tau1^2 + 4 tau2)) / 2 drive the restarted
    conjugate gradient rate.  With kappa1 = kappa2 = 0 the conjugate
    constants collapse onto the gradient ones exactly.
    """
    if not 0.0 <= epsilon0 < 0.25:
        raise RegimeError(f"epsilon0={epsilon0} must lie in [0, 1/4)")
    one_minus = 1.0 - 4.0 * epsilon0
    one_plus = 1.0 + 4.0 * epsilon0
    denom = one_minus - kappa1 * one_plus
    if denom <= 0.0:
        raise RegimeError(
            f"(1 - 4 e0) - kappa1 (1 + 4 e0) = {denom} is nonpositive; constants undefined"
        )
    nu_g = 18.0 * epsilon0 / one_minus
    tau1 = (18.0 * epsilon0 - 10.0 * kappa1 * epsilon0 * one_plus) / denom \
        + (4.0 * kappa2 * epsilon0 + kappa1 * kappa2) / one_minus
    tau2 = (8.0 * kappa2 * epsilon0 + 2.0 * kappa1 * kappa2) / one_minus
    if tau2 == 0.0:
        nu_cg = tau1
    else:
        nu_cg = 0.5 * (tau1 + math.sqrt(tau1 * tau1 + 4.0 * tau2))
    return ConvergenceConstants(epsilon0, kappa1, kappa2, beta_log, nu_g, tau1, tau2, nu_cg)


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return _leq(self.lhs, self.rhs)


@dataclass
class ProjectionBoundsReport:
    checks: list[BoundCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def violations(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.ok]


# Rayleigh quotients of the squared operator below this are roundoff.
_RAYLEIGH_FLOOR = 1e-13


def _power_spectral_norm(forward, gram_apply, random_start, dot, scale,
                         tol: float, max_iterations: int):
    """Spectral norm of an operator via power iteration on its Gram.

    Iterating the squared (Gram) operator sidesteps sign-alternating
    leading eigenvalues; convergence is measured by relative change of
    the Rayleigh quotient.  The returned value is ||forward(z)|| at the
    converged unit vector, which keeps the resolution near machine
    precision instead of the sqrt(eps) floor of the Gram quotient.
    """
    z = random_start()
    nz = math.sqrt(dot(z, z))
    if nz == 0.0:
        return 0.0, 0, True
    z = scale(z, 1.0 / nz)
    lam_prev = None
    iterations = 0
    converged = False
    for iterations in range(1, max_iterations + 1):
        w = gram_apply(z)
        lam = dot(z, w)
        nw = math.sqrt(dot(w, w))
        if nw == 0.0:
            return 0.0, iterations, True
        if lam_prev is not None:
            if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
                converged = True
                z = scale(w, 1.0 / nw)
                break
            if abs(lam) < _RAYLEIGH_FLOOR and abs(lam_prev) < _RAYLEIGH_FLOOR:
                converged = True  # operator is zero at estimator resolution
                break
        z = scale(w, 1.0 / nw)
        lam_prev = lam
    fz = forward(z)
    return math.sqrt(max(dot(fz, fz), 0.0)), iterations, converged


def _dense_tangent_apply(X: LowRankMatrix, Z: np.ndarray) -> np.ndarray:
    return project_to_tangent(X, Z).reconstruct()


def check_projection_bounds(X_l: LowRankMatrix, X: LowRankMatrix,
                            power_tol: float = 1e-8, power_max_iterations: int = 500,
                            seed: int = 0) -> ProjectionBoundsReport:
    """The six projector-distance inequalities against ||X_l - X||_F.

    All quantities are computed densely except the operator distance
    between the two tangent projections, which is estimated by power
    iteration on the squared difference operator.
    """
    if X_l.shape != X.shape:
        raise ValueError("shape mismatch")
    smin = float(X.sigma[X.rank - 1])
    if smin <= 0.0:
        raise ValueError("X must have positive smallest singular value")
    d = float(np.linalg.norm(X_l.dense() - X.dense()))
    ratio = d / smin

    pu_l = X_l.U @ X_l.U.T
    pu = X.U @ X.U.T
    pv_l = X_l.V @ X_l.V.T
    pv = X.V @ X.V.T
    Xd = X.dense()
    residual = Xd - _dense_tangent_apply(X_l, Xd)

    def tangent_diff(Z):
        return _dense_tangent_apply(X_l, Z) - _dense_tangent_apply(X, Z)

    rng = np.random.default_rng(seed)
    n_rows, n_cols = X.shape
    op_dist, _, _ = _power_spectral_norm(
        tangent_diff,
        lambda Z: tangent_diff(tangent_diff(Z)),
        lambda: rng.standard_normal((n_rows, n_cols)),
        lambda a, b: float(np.vdot(a, b)),
        lambda z, a: z * a,
        power_tol,
        power_max_iterations,
    )

    checks = [
        BoundCheck("left_projector_spectral", float(np.linalg.norm(pu_l - pu, 2)), ratio),
        BoundCheck("right_projector_spectral", float(np.linalg.norm(pv_l - pv, 2)), ratio),
        BoundCheck("left_projector_frobenius", float(np.linalg.norm(pu_l - pu)), math.sqrt(2.0) * ratio),
        BoundCheck("right_projector_frobenius", float(np.linalg.norm(pv_l - pv)), math.sqrt(2.0) * ratio),
        BoundCheck("offtangent_part_of_truth", float(np.linalg.norm(residual)), d * ratio),
        BoundCheck("tangent_projection_distance", op_dist, 2.0 * ratio),
    ]
    return ProjectionBoundsReport(checks)


@dataclass
class RipEstimate:
    value: float
    iterations: int
    theoretical_bound: float
    converged: bool = True

    @property
    def within_bound(self) -> bool:
        return self.value <= self.theoretical_bound


def estimate_local_rip(X: LowRankMatrix, S: SamplingSet, beta_log: float = 2.0,
                       tol: float = 1e-8, max_iterations: int = 500,
                       seed: int = 0) -> RipEstimate:
    """Operator norm of P_T - p^{-1} P_T P_Omega P_T on the tangent space.

    The iterate lives directly in the canonical tangent parametrization;
    one application costs O(m r + n r^2).  The reported bound is
    sqrt(32 beta mu0 n r log(n) / (3 m)) with mu0 measured from X.
    """
    inv_p = 1.0 / S.p

    def apply_once(T: TangentVector) -> TangentVector:
        sampled = sample_tangent(S, T)
        return T.add(project_to_tangent(X, sampled), -inv_p)

    def gram(T: TangentVector) -> TangentVector:
        # Renormalized iterates must stay in the gauge or roundoff piles
        # up in the base-parallel blocks and biases the block inner product.
        return canonicalize(apply_once(apply_once(T)))

    rng = np.random.default_rng(seed)
    value, iterations, converged = _power_spectral_norm(
        lambda T: canonicalize(apply_once(T)),
        gram,
        lambda: random_tangent(X, rng),
        inner,
        lambda z, a: z.scaled(a),
        tol,
        max_iterations,
    )
    mu0 = incoherence_report(X).mu0
    n = max(X.n_rows, X.n_cols)
    bound = math.sqrt(32.0 * beta_log * mu0 * n * X.rank * math.log(n) / (3.0 * S.m))
    return RipEstimate(value, iterations, bound, converged)


def estimate_asymmetric_rip(X_l: LowRankMatrix, X: LowRankMatrix, S: SamplingSet,
                            beta_log: float = 2.0, tol: float = 1e-8,
                            max_iterations: int = 500, seed: int = 0) -> RipEstimate:
    """Norm of (n^2/m) P_{T_l} P_Omega (P_U - P_{U_l}) - P_{T_l} (P_U - P_{U_l}).

    The operator is not self-adjoint, so the power iteration runs on its
    Gram.  The reported bound is sqrt(48 beta mu n r log(n) / m) with mu
    the larger measured incoherence of the two matrices.
    """
    if X_l.shape != X.shape:
        raise ValueError("shape mismatch")
    inv_p = 1.0 / S.p
    D_mat = X.U @ X.U.T - X_l.U @ X_l.U.T

    def sample_dense(Z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(Z)
        out[S.rows, S.cols] = S.mult * Z[S.rows, S.cols]
        return out

    def forward(Z: np.ndarray) -> np.ndarray:
        DZ = D_mat @ Z
        return _dense_tangent_apply(X_l, inv_p * sample_dense(DZ) - DZ)

    def adjoint(W: np.ndarray) -> np.ndarray:
        PW = _dense_tangent_apply(X_l, W)
        return D_mat @ (inv_p * sample_dense(PW) - PW)

    def gram(Z: np.ndarray) -> np.ndarray:
        return adjoint(forward(Z))

    rng = np.random.default_rng(seed)
    n_rows, n_cols = X.shape
    value, iterations, converged = _power_spectral_norm(
        forward,
        gram,
        lambda: rng.standard_normal((n_rows, n_cols)),
        lambda a, b: float(np.vdot(a, b)),
        lambda z, a: z * a,
        tol,
        max_iterations,
    )
    mu = max(incoherence_report(X).mu0, incoherence_report(X_l).mu0)
    n = max(n_rows, n_cols)
    bound = math.sqrt(48.0 * beta_log * mu * n * X.rank * math.log(n) / S.m)
    return RipEstimate(value, iterations, bound, converged)


@dataclass
class RecursionReport:
    nu: float
    tau1: float
    tau2: float
    values: np.ndarray
    bounds: np.ndarray

    @property
    def ok(self) -> bool:
        return all(_leq(c, b) for c, b in zip(self.values, self.bounds))


def check_recursion(rho1: float, rho2: float, gamma: float, c0: float,
                    horizon: int) -> RecursionReport:
    """Drive the extremal delayed recursion and compare with nu^l decay.

    The sequence takes c_{l+1} = rho1 c_l + rho2 sum_j gamma^{l-j} c_j
    with equality, seeded by c_1 = nu c_0, which is the worst case the
    geometric bound has to cover.
    """
    if not (rho2 >= rho1 > 0.0) or gamma < 0.0:
        raise RegimeError("need rho2 >= rho1 > 0 and gamma >= 0")
    tau1 = rho1 + gamma
    tau2 = (rho2 - rho1) * gamma
    if tau1 + tau2 >= 1.0:
        raise RegimeError(f"tau1 + tau2 = {tau1 + tau2} >= 1; no contraction to verify")
    nu = 0.5 * (tau1 + math.sqrt(tau1 * tau1 + 4.0 * tau2))
    values = np.empty(horizon + 1)
    values[0] = c0
    if horizon >= 1:
        values[1] = nu * c0
    weighted_tail = 0.0  # sum_{j<=l-1} gamma^{l-j} c_j, updated incrementally
    for l in range(1, horizon):
        weighted_tail = gamma * (weighted_tail + values[l - 1])
        values[l + 1] = rho1 * values[l] + rho2 * weighted_tail
    bounds = c0 * nu ** np.arange(horizon + 1)
    return RecursionReport(nu, tau1, tau2, values, bounds)


@dataclass
class ProcrustesResult:
    Q: np.ndarray
    chordal: float
    projector_dist: float

    @property
    def ok(self) -> bool:
        return _leq(self.chordal, self.projector_dist)


def procrustes_align(U_l: np.ndarray, U: np.ndarray) -> ProcrustesResult:
    """Best unitary alignment of two orthonormal frames.

    Q comes from the SVD of U^T U_l; the chordal distance ||U_l - U Q||_F
    never exceeds the projector distance ||U_l U_l^T - U U^T||_F.
    """
    if U_l.shape != U.shape:
        raise ValueError("shape mismatch")
    r = U.shape[1]
    A = U.T @ U_l
    q1, lam, q2t = np.linalg.svd(A)
    Q = q1 @ q2t
    chordal = float(np.linalg.norm(U_l - U @ Q))
    cross = float(np.sum(A * A))
    projector_dist = float(math.sqrt(max(2.0 * r - 2.0 * cross, 0.0)))
    return ProcrustesResult(Q, chordal, projector_dist)
