import numpy as np
import pytest

from lrmc import LowRankMatrix, SamplingSet


def dense_svd_truncate(Z: np.ndarray, r: int) -> np.ndarray:
    """Independent oracle: best rank-r approximation via full dense SVD."""
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def dense_sampling(S: SamplingSet, Z: np.ndarray) -> np.ndarray:
    """Independent oracle: multiplicity-scaled componentwise sampling."""
    out = np.zeros_like(Z)
    out[S.rows, S.cols] = S.mult * Z[S.rows, S.cols]
    return out


def dense_tangent_projection(U: np.ndarray, V: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Independent oracle: U U^T Z + Z V V^T - U U^T Z V V^T."""
    PUZ = U @ (U.T @ Z)
    ZPV = (Z @ V) @ V.T
    return PUZ + ZPV - (PUZ @ V) @ V.T


def full_sampling_set(n: int, copies: int = 1) -> SamplingSet:
    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return SamplingSet(
        n, n, rows.ravel().astype(np.int64), cols.ravel().astype(np.int64),
        np.full(n * n, copies, dtype=np.int64), copies * n * n,
    )


def random_dense(rng, n_rows: int, n_cols: int) -> np.ndarray:
    return rng.standard_normal((n_rows, n_cols))


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)
