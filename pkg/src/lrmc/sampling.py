"""Sampling model, the sampling operator, incoherence metrics, partitioning.

The theory model draws indices independently and uniformly with
replacement, so an index can repeat; the operator scales each entry by
its multiplicity and is therefore not a projection.  Experiments can
also sample distinct entries (without replacement); the mode is recorded
on the set so result rows can state which model produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import LowRankMatrix

__all__ = [
    "SamplingSet",
    "sampled_product",
    "ObservedData",
    "IncoherenceReport",
    "sample_with_replacement",
    "sample_without_replacement",
    "apply_sampling",
    "incoherence_report",
    "partition",
    "partition_observed",
]


@dataclass
class SamplingSet:
    """Multiset of observed index pairs, deduplicated and row-major sorted.

    ``m`` counts draws including multiplicity, so ``p = m / (n_rows *
    n_cols)`` can exceed 1 under heavy resampling (flagged by callers,
    not forbidden).
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    mult: np.ndarray
    m: int
    with_replacement: bool = True

    @property
    def p(self) -> float:
        return self.m / (self.n_rows * self.n_cols)

    @property
    def n_locations(self) -> int:
        return self.rows.size

    @property
    def max_repetition(self) -> int:
        return int(self.mult.max()) if self.mult.size else 0

    @property
    def linear(self) -> np.ndarray:
        return self.rows.astype(np.int64) * self.n_cols + self.cols

    @property
    def row_starts(self) -> np.ndarray:
        """CSR-style row pointers; locations are kept row-major sorted."""
        cached = getattr(self, "_row_starts", None)
        if cached is None:
            if np.any(np.diff(self.linear) < 0):
                raise ValueError("sampling locations must be row-major sorted")
            cached = np.searchsorted(self.rows, np.arange(self.n_rows + 1))
            self._row_starts = cached
        return cached

    def expanded_draws(self) -> np.ndarray:
        """Linear indices of all m draws, multiplicity expanded."""
        return np.repeat(self.linear, self.mult)

    def sparse_with(self, values: np.ndarray):
        """CSR matrix holding ``values`` at the deduplicated locations."""
        return sp.csr_array((values, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))


def _from_linear(n_rows: int, n_cols: int, lin: np.ndarray, with_replacement: bool, m: int) -> SamplingSet:
    uniq, counts = np.unique(lin, return_counts=True)
    rows = (uniq // n_cols).astype(np.int64)
    cols = (uniq % n_cols).astype(np.int64)
    return SamplingSet(n_rows, n_cols, rows, cols, counts.astype(np.int64), m, with_replacement)


def sample_with_replacement(n: int, m: int, seed: int) -> SamplingSet:
    """m i.i.d. uniform draws over the n x n index grid."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    rng = np.random.default_rng(seed)
    lin = rng.integers(0, n * n, size=m, dtype=np.int64)
    return _from_linear(n, n, lin, True, m)


def sample_without_replacement(n: int, m: int, seed: int) -> SamplingSet:
    """m distinct entries, uniform over the n x n grid."""
    if n < 1 or not 1 <= m <= n * n:
        raise ValueError("need n >= 1 and 1 <= m <= n*n")
    rng = np.random.default_rng(seed)
    lin = rng.choice(n * n, size=m, replace=False).astype(np.int64)
    return _from_linear(n, n, lin, False, m)


def sampled_product(S: SamplingSet, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise sampled product: out[t] = <A[rows[t]], B[cols[t]]>.

    Walks the sorted support one row at a time so each row's slice is a
    single BLAS matvec; far faster than gathering full m x r blocks.
    The reduction order is fixed (row-major over the support, inner dot
    in index order), so results are bitwise reproducible.
    """
    out = np.empty(S.n_locations)
    starts = S.row_starts
    cols = S.cols
    for i in range(S.n_rows):
        lo, hi = starts[i], starts[i + 1]
        if lo != hi:
            out[lo:hi] = B[cols[lo:hi]] @ A[i]
    return out


def entry_values(S: SamplingSet, Z) -> np.ndarray:
    """Plain values Z_ij at the deduplicated locations (no multiplicity)."""
    if isinstance(Z, LowRankMatrix):
        if Z.shape != (S.n_rows, S.n_cols):
            raise ValueError("shape mismatch")
        return sampled_product(S, Z.U * Z.sigma, Z.V)
    Z = np.asarray(Z)
    if Z.shape != (S.n_rows, S.n_cols):
        raise ValueError("shape mismatch")
    return Z[S.rows, S.cols]


def apply_sampling(S: SamplingSet, Z):
    """The sampling operator: multiplicity(i,j) * Z_ij on the support.

    Low-rank input is evaluated entrywise from its factors in O(m r);
    the input is never densified.
    """
    return S.sparse_with(S.mult * entry_values(S, Z))


@dataclass
class ObservedData:
    """Measurements consumed by solvers: one value per observed location.

    A repeated draw of the same entry observes the same value, so values
    are stored per deduplicated location and the operator re-applies the
    multiplicity.
    """

    sampling: SamplingSet
    values: np.ndarray

    @classmethod
    def observe(cls, S: SamplingSet, X) -> "ObservedData":
        return cls(S, entry_values(S, X))

    def operator_norm_of_observations(self) -> float:
        """||P_Omega(X)||_F, i.e. the norm of the scaled measurement matrix."""
        return float(np.linalg.norm(self.sampling.mult * self.values))

    def save(self, path) -> None:
        S = self.sampling
        with open(path, "w") as f:
            f.write(f"{S.n_rows} {S.n_cols} {S.m}\n")
            for i, j, c, v in zip(S.rows, S.cols, S.mult, self.values):
                f.write(f"{i + 1} {j + 1} {c} {float(v)!r}\n")

    @classmethod
    def load(cls, path) -> "ObservedData":
        with open(path) as f:
            header = f.readline().split()
            n_rows, n_cols, m = int(header[0]), int(header[1]), int(header[2])
            rows, cols, mult, vals = [], [], [], []
            for line in f:
                if not line.strip():
                    continue
                i, j, c, v = line.split()
                rows.append(int(i) - 1)
                cols.append(int(j) - 1)
                mult.append(int(c))
                vals.append(float(v))
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        mult = np.asarray(mult, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        order = np.argsort(rows * n_cols + cols, kind="stable")
        S = SamplingSet(n_rows, n_cols, rows[order], cols[order], mult[order], m,
                        with_replacement=bool(np.any(mult > 1)))
        return cls(S, vals[order])


@dataclass
class IncoherenceReport:
    mu0: float
    mu1: float
    max_repetition: int


def incoherence_report(X: LowRankMatrix, S: SamplingSet | None = None) -> IncoherenceReport:
    """Smallest incoherence and spikiness constants of a factored matrix.

    mu0 bounds the alignment of the singular subspaces with the canonical
    basis (max row norm of U and V); mu1 bounds the largest entry against
    the spectral norm.
    """
    if X.rank < 1:
        raise ValueError("X must have positive rank")
    r = X.rank
    row_u = np.max(np.sum(X.U * X.U, axis=1))
    row_v = np.max(np.sum(X.V * X.V, axis=1))
    mu0 = max(X.n_rows * row_u, X.n_cols * row_v) / r
    smax = float(X.sigma[0])
    if smax == 0.0:
        mu1 = 0.0
    else:
        mu1 = X.max_abs_entry() * np.sqrt(X.n_rows * X.n_cols / r) / smax
    max_rep = S.max_repetition if S is not None else 0
    return IncoherenceReport(mu0=float(mu0), mu1=float(mu1), max_repetition=max_rep)


def partition(S: SamplingSet, L: int, seed: int) -> list[SamplingSet]:
    """Shuffle the m draws and split them into L+1 groups.

    Groups have size floor(m / (L+1)); the remainder goes to group 0.
    Each group is again a sampling set with its own m and p.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    if L + 1 > S.m:
        raise ValueError(f"cannot split {S.m} draws into {L + 1} groups")
    if L == 0:
        return [S]
    rng = np.random.default_rng(seed)
    draws = S.expanded_draws()
    draws = draws[rng.permutation(draws.size)]
    base = S.m // (L + 1)
    sizes = [base + S.m % (L + 1)] + [base] * L
    groups = []
    offset = 0
    for size in sizes:
        chunk = draws[offset : offset + size]
        offset += size
        groups.append(_from_linear(S.n_rows, S.n_cols, chunk, S.with_replacement, size))
    return groups


def partition_observed(data: ObservedData, L: int, seed: int) -> list[ObservedData]:
    """Partition observations along with their sampling set."""
    parent = data.sampling
    groups = partition(parent, L, seed)
    parent_lin = parent.linear
    out = []
    for g in groups:
        idx = np.searchsorted(parent_lin, g.linear)
        out.append(ObservedData(g, data.values[idx]))
    return out
