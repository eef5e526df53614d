"""Factored low-rank matrices, truncated SVD, thin QR, random test matrices.

Everything downstream works with matrices in the factored form
``X = U @ diag(sigma) @ V.T`` and never materializes large iterates
densely.  The dense SVD is used only for small matrices (the 2r x 2r
retraction cores and trim cores); anything large goes through the seeded
block power iteration in :func:`truncated_svd`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateRankError, SvdConvergenceError

__all__ = [
    "LowRankMatrix",
    "SpectrumSummary",
    "hard_threshold",
    "thin_qr",
    "random_lowrank",
    "random_lowrank_with_spectrum",
    "spectrum_summary",
    "truncated_svd",
    "LowRankPlusSparse",
]


@dataclass
class LowRankMatrix:
    """Rank-r matrix stored as a reduced SVD ``U @ diag(sigma) @ V.T``.

    U and V have orthonormal columns; sigma is nonnegative and sorted
    nonincreasing.  ``tie_at_cut`` records whether the trailing kept
    singular value was (numerically) tied with the first discarded one
    when the factorization came out of a rank truncation.
    """

    n_rows: int
    n_cols: int
    rank: int
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    tie_at_cut: bool = field(default=False, compare=False)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def dense(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def frob_norm(self) -> float:
        return float(np.linalg.norm(self.sigma))

    def entries(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Values at the given index pairs, O(r) per entry."""
        return np.einsum("ik,ik->i", self.U[rows] * self.sigma, self.V[cols])

    def max_abs_entry(self, block: int = 2048) -> float:
        """Entrywise max-norm, computed in row blocks of the dense product."""
        out = 0.0
        scaled = self.U * self.sigma
        for lo in range(0, self.n_rows, block):
            chunk = scaled[lo : lo + block] @ self.V.T
            out = max(out, float(np.max(np.abs(chunk))) if chunk.size else 0.0)
        return out

    def assert_valid(self, tol: float = 1e-12) -> None:
        """Check the factored-form invariants (test helper)."""
        r = self.rank
        assert self.U.shape == (self.n_rows, r)
        assert self.V.shape == (self.n_cols, r)
        assert self.sigma.shape == (r,)
        assert np.max(np.abs(self.U.T @ self.U - np.eye(r))) <= tol
        assert np.max(np.abs(self.V.T @ self.V - np.eye(r))) <= tol
        assert np.all(np.diff(self.sigma) <= 0.0)
        assert self.sigma[r - 1] >= 0.0


@dataclass
class SpectrumSummary:
    sigma_min: float
    sigma_max: float
    kappa: float


def spectrum_summary(X: LowRankMatrix) -> SpectrumSummary:
    """Extreme singular values and condition number of a factored matrix."""
    smin = float(X.sigma[X.rank - 1])
    smax = float(X.sigma[0])
    if smin <= 0.0:
        raise DegenerateRankError(
            f"smallest singular value is {smin}; rank-{X.rank} factorization is degenerate"
        )
    return SpectrumSummary(sigma_min=smin, sigma_max=smax, kappa=smax / smin)


def _fix_signs(U: np.ndarray, V: np.ndarray):
    """Flip paired singular-vector signs so each U column has a positive
    largest-magnitude entry.  Keeps golden files reproducible."""
    if U.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0.0] = 1.0
    return U * signs, V * signs


def _tie_at_cut(s: np.ndarray, rank: int, rel: float = 1e-12) -> bool:
    if rank >= s.size:
        return False
    scale = s[0] if s[0] > 0 else 1.0
    return bool(abs(s[rank - 1] - s[rank]) <= rel * scale)


def thin_qr(Y: np.ndarray):
    """Reduced QR factorization of an n x r matrix with n >= r.

    Rank-deficient input is allowed; R may then carry zero diagonal
    entries.  The all-zero matrix maps to the leading canonical basis
    columns so the output is always deterministic.
    """
    n, r = Y.shape
    if n < r:
        raise ValueError(f"thin_qr needs n >= r, got shape {Y.shape}")
    if not np.any(Y):
        Q = np.zeros((n, r))
        Q[np.arange(r), np.arange(r)] = 1.0
        return Q, np.zeros((r, r))
    Q, R = np.linalg.qr(Y)
    return Q, R


class LowRankPlusSparse:
    """Implicit sum of a factored low-rank matrix and a sparse matrix.

    Exposes just enough (shape, matmat, rmatmat) for the block power
    iteration; the sum itself is never formed densely.
    """

    def __init__(self, base: LowRankMatrix, sparse):
        if sparse.shape != base.shape:
            raise ValueError("shape mismatch between low-rank and sparse parts")
        self.base = base
        self.sparse = sp.csr_array(sparse)
        self._sparse_t = sp.csr_array(self.sparse.T)

    @property
    def shape(self):
        return self.base.shape

    def matmat(self, W: np.ndarray) -> np.ndarray:
        b = self.base
        return b.U @ (b.sigma[:, None] * (b.V.T @ W)) + self.sparse @ W

    def rmatmat(self, W: np.ndarray) -> np.ndarray:
        b = self.base
        return b.V @ (b.sigma[:, None] * (b.U.T @ W)) + self._sparse_t @ W


def _matmat(A, W):
    if hasattr(A, "matmat"):
        return A.matmat(W)
    return A @ W


def _rmatmat(A, W):
    if hasattr(A, "rmatmat"):
        return A.rmatmat(W)
    return A.T @ W


def truncated_svd(
    A,
    rank: int,
    tol: float = 1e-10,
    max_iterations: int = 300,
    seed: int = 0,
    oversample: int = 8,
):
    """Leading ``rank`` singular triplets by seeded block power iteration.

    Accepts a dense array, a scipy sparse matrix, or any object with
    ``shape``/``matmat``/``rmatmat``.  Iterates an oversampled subspace
    ``Q <- orth(A A^T Q)`` and stops once the subspace residual
    ``||A v_i - sigma_i u_i||_F / sigma_1`` over the leading block drops
    below ``tol``, or at the iteration cap.  Hitting the cap returns the
    best factors found (callers that need certainty can inspect the
    returned flag).

    Returns ``(U, s, V, iterations, residual, converged)``.
    """
    n_rows, n_cols = A.shape
    if not 1 <= rank <= min(n_rows, n_cols):
        raise ValueError(f"rank {rank} out of range for shape {(n_rows, n_cols)}")
    k = min(rank + oversample, n_rows, n_cols)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n_rows, k)))
    U = Q[:, :rank]
    s = np.zeros(rank)
    V = np.zeros((n_cols, rank))
    resid = np.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        Q, _ = np.linalg.qr(_matmat(A, _rmatmat(A, Q)))
        B = _rmatmat(A, Q).T  # k x n_cols, equals Q^T A
        Ub, sb, Vbt = np.linalg.svd(B, full_matrices=False)
        U = Q @ Ub[:, :rank]
        s = sb[:rank]
        V = Vbt[:rank].T
        if sb[0] == 0.0:
            resid = 0.0
            break
        R = _matmat(A, V) - U * s
        resid = float(np.linalg.norm(R) / sb[0])
        if resid <= tol:
            break
    if not np.all(np.isfinite(s)) or not np.all(np.isfinite(U)):
        raise SvdConvergenceError(
            f"block power iteration produced non-finite factors after {iterations} iterations",
            iterations=iterations,
        )
    U, V = _fix_signs(U, V)
    return U, s.copy(), V, iterations, resid, resid <= tol


def hard_threshold(Z, rank: int, tol: float = 1e-10, max_iterations: int = 300, seed: int = 0) -> LowRankMatrix:
    """Best rank-r approximation in Frobenius norm (top-r SVD truncation).

    Dense input goes through LAPACK; sparse or implicit input goes
    through :func:`truncated_svd`.  Ties among equal singular values at
    the cut keep the backend's leading vectors and set ``tie_at_cut``.
    """
    n_rows, n_cols = Z.shape
    if not 1 <= rank <= min(n_rows, n_cols):
        raise ValueError(f"rank {rank} out of range for shape {(n_rows, n_cols)}")
    if isinstance(Z, np.ndarray):
        try:
            U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        except np.linalg.LinAlgError as e:
            raise SvdConvergenceError(f"dense SVD did not converge: {e}") from e
        tie = _tie_at_cut(s, rank)
        U, V = _fix_signs(U[:, :rank], Vt[:rank].T)
        return LowRankMatrix(n_rows, n_cols, rank, U, s[:rank].copy(), V, tie_at_cut=tie)
    U, s, V, _, _, _ = truncated_svd(Z, rank, tol=tol, max_iterations=max_iterations, seed=seed)
    return LowRankMatrix(n_rows, n_cols, rank, U, s, V, tie_at_cut=_tie_at_cut(s, rank))


def random_lowrank(n: int, rank: int, seed: int) -> LowRankMatrix:
    """Product of two independent standard Gaussian factors, in SVD form.

    Draws L (n x r) and R (r x n) and returns the exact factored SVD of
    L @ R without forming the n x n product.
    """
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} out of range for n={n}")
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((n, rank))
    R = rng.standard_normal((rank, n))
    Ql, Rl = np.linalg.qr(L)
    Qr, Rr = np.linalg.qr(R.T)
    u, s, vt = np.linalg.svd(Rl @ Rr.T)
    U, V = _fix_signs(Ql @ u, Qr @ vt.T)
    return LowRankMatrix(n, n, rank, U, s, V)


def random_lowrank_with_spectrum(n: int, rank: int, singular_values, seed: int) -> LowRankMatrix:
    """Random singular subspaces with a prescribed spectrum.

    Used by tests and experiments that need to control the condition
    number directly.
    """
    sigma = np.asarray(singular_values, dtype=float)
    if sigma.shape != (rank,) or np.any(np.diff(sigma) > 0) or sigma[-1] < 0:
        raise ValueError("singular_values must be length-rank, nonincreasing, nonnegative")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    V, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    U, V = _fix_signs(U, V)
    return LowRankMatrix(n, n, rank, U, sigma.copy(), V)


def rel_error(estimate: LowRankMatrix, truth: LowRankMatrix, block: int = 1024) -> float:
    """Full relative error ||estimate - truth||_F / ||truth||_F.

    Computed from dense row blocks so it stays exact near convergence,
    where Gram-based shortcuts lose all significant digits.
    """
    if estimate.shape != truth.shape:
        raise ValueError("shape mismatch")
    num2 = 0.0
    a = estimate.U * estimate.sigma
    b = truth.U * truth.sigma
    for lo in range(0, truth.n_rows, block):
        diff = a[lo : lo + block] @ estimate.V.T - b[lo : lo + block] @ truth.V.T
        num2 += float(np.sum(diff * diff))
    den = truth.frob_norm()
    if den == 0.0:
        return 0.0 if num2 == 0.0 else np.inf
    return float(np.sqrt(num2) / den)
