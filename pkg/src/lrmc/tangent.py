"""Tangent space machinery for the fixed-rank manifold.

A tangent vector at ``X = U S V^T`` is stored in the canonical gauge

    P_T(Z) = U M V^T + U Y1^T + Y2 V^T,   V^T Y1 = 0,  U^T Y2 = 0,

which makes Frobenius inner products separable across the three blocks
and keeps every kernel at O(m r + n r^2).  The retraction computes the
best rank-r approximation of ``X + P_T(Z)`` from two thin QRs and one
dense SVD of a 2r x 2r core, never forming an n x n matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankCollapseError
from .linalg import LowRankMatrix, _fix_signs, _tie_at_cut, thin_qr
from .sampling import SamplingSet, sampled_product

__all__ = [
    "TangentVector",
    "canonicalize",
    "random_tangent",
    "project_to_tangent",
    "project_factored",
    "transport",
    "zero_tangent",
    "inner",
    "retract",
    "sample_tangent",
    "tangent_entry_values",
]


@dataclass
class TangentVector:
    """Canonical-gauge element of the tangent space at a base point."""

    U: np.ndarray  # base left factor, n_rows x r
    V: np.ndarray  # base right factor, n_cols x r
    M: np.ndarray  # r x r coefficient of U M V^T
    Y1: np.ndarray  # n_cols x r, V^T Y1 = 0
    Y2: np.ndarray  # n_rows x r, U^T Y2 = 0

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def scaled(self, a: float) -> "TangentVector":
        return TangentVector(self.U, self.V, a * self.M, a * self.Y1, a * self.Y2)

    def add(self, other: "TangentVector", coeff: float = 1.0) -> "TangentVector":
        _require_same_base(self, other)
        return TangentVector(
            self.U, self.V,
            self.M + coeff * other.M,
            self.Y1 + coeff * other.Y1,
            self.Y2 + coeff * other.Y2,
        )

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))

    def reconstruct(self) -> np.ndarray:
        """Dense value, for oracles and small problems only."""
        return self.U @ (self.M @ self.V.T + self.Y1.T) + self.Y2 @ self.V.T

    def factors(self):
        """(A, B) with reconstruct() == A @ B.T and 2r columns each."""
        A = np.hstack([self.U, self.Y2])
        B = np.hstack([self.V @ self.M.T + self.Y1, self.V])
        return A, B


def _same_base(a: TangentVector, b: TangentVector) -> bool:
    if a.U is b.U and a.V is b.V:
        return True
    return np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)


def _require_same_base(a: TangentVector, b: TangentVector) -> None:
    if not _same_base(a, b):
        raise ValueError("tangent vectors have different base points")


def zero_tangent(X: LowRankMatrix) -> TangentVector:
    r = X.rank
    return TangentVector(X.U, X.V, np.zeros((r, r)), np.zeros((X.n_cols, r)), np.zeros((X.n_rows, r)))


def random_tangent(X: LowRankMatrix, rng) -> TangentVector:
    """Gaussian tangent vector at X in the canonical gauge."""
    r = X.rank
    M = rng.standard_normal((r, r))
    Y1 = rng.standard_normal((X.n_cols, r))
    Y2 = rng.standard_normal((X.n_rows, r))
    Y1 -= X.V @ (X.V.T @ Y1)
    Y2 -= X.U @ (X.U.T @ Y2)
    return TangentVector(X.U, X.V, M, Y1, Y2)


def canonicalize(T: TangentVector) -> TangentVector:
    """Restore the gauge V^T Y1 = 0, U^T Y2 = 0 without changing the value.

    Base-parallel components of Y1 and Y2 are folded into M.  Needed by
    iterative schemes that renormalize near-zero vectors, where roundoff
    would otherwise accumulate outside the gauge.
    """
    A = T.V.T @ T.Y1
    B = T.U.T @ T.Y2
    return TangentVector(
        T.U, T.V,
        T.M + A.T + B,
        T.Y1 - T.V @ A,
        T.Y2 - T.U @ B,
    )


def project_to_tangent(X: LowRankMatrix, Z) -> TangentVector:
    """Orthogonal projection of Z onto the tangent space at X.

    Z may be dense or scipy-sparse; for sparse Z supported on m entries
    the cost is O(m r + n r^2).
    """
    U, V = X.U, X.V
    ZV = Z @ V
    ZtU = Z.T @ U
    M = U.T @ ZV
    Y1 = ZtU - V @ M.T
    Y2 = ZV - U @ M
    return TangentVector(U, V, M, Y1, Y2)


def project_factored(X: LowRankMatrix, A: np.ndarray, B: np.ndarray) -> TangentVector:
    """Projection of the factored matrix A @ B.T onto the tangent space at X."""
    UA = X.U.T @ A
    VB = X.V.T @ B
    M = UA @ VB.T
    Y1 = B @ UA.T - X.V @ M.T
    Y2 = A @ VB.T - X.U @ M
    return TangentVector(X.U, X.V, M, Y1, Y2)


def transport(X: LowRankMatrix, T: TangentVector) -> TangentVector:
    """Re-express a tangent vector from another base point in T_X.

    The vector has rank at most 2r, so the projection runs on its
    factors without densifying.
    """
    A, B = T.factors()
    return project_factored(X, A, B)


def inner(Ta: TangentVector, Tb: TangentVector) -> float:
    """Frobenius inner product of the reconstructions, block separable."""
    _require_same_base(Ta, Tb)
    return float(np.sum(Ta.M * Tb.M) + np.sum(Ta.Y1 * Tb.Y1) + np.sum(Ta.Y2 * Tb.Y2))


def tangent_entry_values(S: SamplingSet, T: TangentVector) -> np.ndarray:
    """Plain values of reconstruct(T) at the deduplicated locations, O(m r)."""
    A, B = T.factors()
    return sampled_product(S, A, B)


def sample_tangent(S: SamplingSet, T: TangentVector):
    """Sampling operator applied to reconstruct(T) without densifying."""
    if S.n_rows != T.U.shape[0] or S.n_cols != T.V.shape[0]:
        raise ValueError("shape mismatch")
    return S.sparse_with(S.mult * tangent_entry_values(S, T))


def retract(X: LowRankMatrix, T: TangentVector, rank: int | None = None,
            collapse_rel: float = 1e-12) -> LowRankMatrix:
    """Best rank-r approximation of X + reconstruct(T).

    The sum lives in the tangent space, so its SVD reduces to a dense
    SVD of the 2r x 2r core assembled from the thin QRs of Y1 and Y2;
    total cost O(n r^2 + r^3).  Raises RankCollapseError when the core's
    r-th singular value vanishes relative to its largest, since the
    solvers assume exact rank r throughout.
    """
    if not (T.U is X.U and T.V is X.V) and not (
        np.array_equal(T.U, X.U) and np.array_equal(T.V, X.V)
    ):
        raise ValueError("tangent vector is not based at the given point")
    r = X.rank
    out_rank = r if rank is None else rank
    if not 1 <= out_rank <= 2 * r:
        raise ValueError(f"target rank {out_rank} out of range for base rank {r}")
    Q1, R1 = thin_qr(T.Y1)
    Q2, R2 = thin_qr(T.Y2)
    core = np.zeros((2 * r, 2 * r))
    core[:r, :r] = np.diag(X.sigma) + T.M
    core[:r, r:] = R1.T
    core[r:, :r] = R2
    u, s, vt = np.linalg.svd(core)
    # Operand magnitude before cancellation; a target whose whole spectrum
    # sits at roundoff level relative to it is a collapse as well.
    operand_scale = max(
        float(X.sigma[0]) if r > 0 else 0.0,
        float(np.max(np.abs(T.M), initial=0.0)),
        float(np.max(np.abs(R1), initial=0.0)),
        float(np.max(np.abs(R2), initial=0.0)),
    )
    if s[0] <= collapse_rel * operand_scale or s[out_rank - 1] < collapse_rel * s[0]:
        raise RankCollapseError(
            f"retraction target has numerical rank below {out_rank}", spectrum=s
        )
    U = np.hstack([X.U, Q2]) @ u[:, :out_rank]
    V = np.hstack([X.V, Q1]) @ vt[:out_rank].T
    U, V = _fix_signs(U, V)
    return LowRankMatrix(X.n_rows, X.n_cols, out_rank, U, s[:out_rank].copy(), V,
                         tie_at_cut=_tie_at_cut(s, out_rank))
