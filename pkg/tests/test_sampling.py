import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrmc import (
    ObservedData,
    apply_sampling,
    incoherence_report,
    partition,
    partition_observed,
    random_lowrank,
    sample_with_replacement,
    sample_without_replacement,
)
from lrmc.linalg import LowRankMatrix
from lrmc.sampling import entry_values

from conftest import dense_sampling, full_sampling_set


class TestSampleWithReplacement:
    def test_single_cell(self):
        S = sample_with_replacement(1, 5, 0)
        assert S.n_locations == 1
        assert S.mult[0] == 5
        assert S.m == 5
        assert S.p == 5.0

    def test_determinism(self):
        a = sample_with_replacement(100, 2000, 42)
        b = sample_with_replacement(100, 2000, 42)
        assert np.array_equal(a.rows, b.rows)
        assert np.array_equal(a.cols, b.cols)
        assert np.array_equal(a.mult, b.mult)

    def test_counts_match_binomial(self):
        # Per-cell counts are Binomial(m, 1/n^2); check the 5-sigma band
        # covers at least 99% of cells.
        n, m = 50, 5000
        S = sample_with_replacement(n, m, 7)
        counts = np.zeros(n * n)
        counts[S.linear] = S.mult
        q = 1.0 / (n * n)
        mean, sd = m * q, math.sqrt(m * q * (1 - q))
        inside = np.mean(np.abs(counts - mean) <= 5 * sd)
        assert inside >= 0.99

    def test_repetition_bound_over_seeds(self):
        # With m = n log n draws, the max repetition stays below
        # (8/3) * 2 * log(n) in at least 95% of trials.
        n = 50
        m = int(n * math.log(n))
        bound = (8.0 / 3.0) * 2.0 * math.log(n)
        hits = sum(
            sample_with_replacement(n, m, seed).max_repetition <= bound
            for seed in range(100)
        )
        assert hits >= 95


class TestWithoutReplacement:
    def test_all_distinct(self):
        S = sample_without_replacement(30, 500, 3)
        assert S.n_locations == 500
        assert np.all(S.mult == 1)
        assert not S.with_replacement

    def test_full_coverage(self):
        S = sample_without_replacement(10, 100, 1)
        assert S.n_locations == 100


class TestApplySampling:
    def test_identity_when_every_cell_once(self, rng):
        n = 8
        S = full_sampling_set(n)
        Z = rng.standard_normal((n, n))
        assert np.allclose(apply_sampling(S, Z).toarray(), Z)

    def test_multiplicity_scaling(self):
        S = sample_with_replacement(2, 3, 0)
        # Construct the forced example directly.
        from lrmc.sampling import SamplingSet

        S = SamplingSet(2, 2, np.array([0, 1]), np.array([0, 1]),
                        np.array([2, 1]), 3)
        Z = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = apply_sampling(S, Z).toarray()
        assert np.array_equal(out, [[2.0, 0.0], [0.0, 4.0]])

    def test_matches_dense_oracle_on_lowrank(self, rng):
        X = random_lowrank(40, 3, 5)
        S = sample_with_replacement(40, 900, 6)
        out = apply_sampling(S, X).toarray()
        oracle = dense_sampling(S, X.dense())
        assert np.max(np.abs(out - oracle)) <= 1e-12 * np.max(np.abs(oracle))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_self_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 20))
        m = int(rng.integers(1, 3 * n * n))
        S = sample_with_replacement(n, m, seed)
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, n))
        lhs = np.vdot(dense_sampling(S, A), B)
        rhs = np.vdot(A, dense_sampling(S, B))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_not_a_projection_with_duplicates(self, rng):
        n = 6
        S = sample_with_replacement(n, 4 * n * n, 0)
        assert S.max_repetition >= 2
        Z = rng.standard_normal((n, n))
        once = dense_sampling(S, Z)
        twice = dense_sampling(S, once)
        mult_sq = np.zeros((n, n))
        mult_sq[S.rows, S.cols] = S.mult.astype(float) ** 2
        assert np.allclose(twice, mult_sq * Z)
        assert not np.allclose(twice, once)


class TestIncoherence:
    def test_fully_aligned_rank_one(self):
        n = 4
        U = np.zeros((n, 1)); U[0, 0] = 1.0
        X = LowRankMatrix(n, n, 1, U, np.array([1.0]), U.copy())
        assert incoherence_report(X).mu0 == 4.0

    def test_flat_vector(self):
        n = 4
        U = np.full((n, 1), 0.5)
        X = LowRankMatrix(n, n, 1, U, np.array([1.0]), U.copy())
        assert abs(incoherence_report(X).mu0 - 1.0) <= 1e-12

    def test_matches_row_scan(self):
        X = random_lowrank(64, 3, 9)
        rep = incoherence_report(X)
        scan = max(
            max(np.sum(X.U[i] ** 2) for i in range(64)),
            max(np.sum(X.V[j] ** 2) for j in range(64)),
        ) * 64 / 3
        assert abs(rep.mu0 - scan) <= 1e-12 * scan
        dense_inf = np.max(np.abs(X.dense()))
        mu1_oracle = dense_inf * 64 / (math.sqrt(3) * X.sigma[0])
        assert abs(rep.mu1 - mu1_oracle) <= 1e-12 * mu1_oracle

    def test_max_repetition_passthrough(self):
        S = sample_with_replacement(10, 500, 0)
        X = random_lowrank(10, 2, 0)
        assert incoherence_report(X, S).max_repetition == S.max_repetition


class TestPartition:
    def test_single_group_is_identity(self):
        S = sample_with_replacement(20, 300, 1)
        groups = partition(S, 0, 99)
        assert len(groups) == 1
        assert groups[0] is S

    def test_exact_division(self):
        S = sample_with_replacement(10, 10, 2)
        groups = partition(S, 4, 0)
        assert [g.m for g in groups] == [2, 2, 2, 2, 2]

    def test_multiset_union_matches(self):
        S = sample_with_replacement(15, 400, 3)
        groups = partition(S, 3, 17)
        merged = np.sort(np.concatenate([g.expanded_draws() for g in groups]))
        assert np.array_equal(merged, np.sort(S.expanded_draws()))

    def test_too_many_groups(self):
        S = sample_with_replacement(5, 3, 0)
        with pytest.raises(ValueError):
            partition(S, 3, 0)

    def test_partition_observed_values_follow(self):
        X = random_lowrank(12, 2, 4)
        S = sample_with_replacement(12, 140, 5)
        data = ObservedData.observe(S, X)
        for g in partition_observed(data, 2, 6):
            assert np.allclose(g.values, entry_values(g.sampling, X))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X = random_lowrank(9, 2, 8)
        S = sample_with_replacement(9, 60, 9)
        data = ObservedData.observe(S, X)
        path = tmp_path / "observed.txt"
        data.save(path)
        loaded = ObservedData.load(path)
        assert loaded.sampling.m == S.m
        assert np.array_equal(loaded.sampling.rows, S.rows)
        assert np.array_equal(loaded.sampling.cols, S.cols)
        assert np.array_equal(loaded.sampling.mult, S.mult)
        assert np.array_equal(loaded.values, data.values)

    def test_format_is_one_based_with_header(self, tmp_path):
        from lrmc.sampling import SamplingSet

        S = SamplingSet(2, 3, np.array([0]), np.array([2]), np.array([2]), 2)
        data = ObservedData(S, np.array([0.1]))
        path = tmp_path / "obs.txt"
        data.save(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "2 3 2"
        assert lines[1] == "1 3 2 0.1"


def test_self_adjointness_sweep():
    # The stated 500-pair sweep for the operator's self-adjointness.
    rng = np.random.default_rng(777)
    for k in range(500):
        n = int(rng.integers(3, 16))
        m = int(rng.integers(1, 3 * n * n))
        S = sample_with_replacement(n, m, 200_000 + k)
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, n))
        lhs = np.vdot(dense_sampling(S, A), B)
        rhs = np.vdot(A, dense_sampling(S, B))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)
