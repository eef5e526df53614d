import math

import numpy as np
import pytest

from lrmc import (
    InitFailureError,
    ObservedData,
    incoherence_report,
    random_lowrank,
    random_lowrank_with_spectrum,
    rel_error,
    sample_with_replacement,
    sample_without_replacement,
)
from lrmc.initialization import (
    InitOptions,
    init_one_step,
    init_resampled,
    resampled_rounds,
    trim,
    trim_factors,
)
from lrmc.sampling import SamplingSet

from conftest import full_sampling_set


class TestOneStep:
    def test_exact_under_full_sampling(self):
        n, r = 20, 3
        X = random_lowrank(n, r, 0)
        data = ObservedData.observe(full_sampling_set(n), X)
        X0 = init_one_step(data, r)
        assert rel_error(X0, X) <= 1e-10

    def test_single_observed_cell_scaling(self):
        # One observed entry v at (1,1) of a 2x2 grid: p = 1/4, so the
        # truncation sees the rank-1 matrix 4 v e1 e1^T.
        v = 0.73
        S = SamplingSet(2, 2, np.array([0]), np.array([0]), np.array([1]), 1)
        data = ObservedData(S, np.array([v]))
        X0 = init_one_step(data, 1)
        expected = np.zeros((2, 2))
        expected[0, 0] = 4.0 * v
        assert np.linalg.norm(X0.dense() - expected) <= 1e-12

    def test_error_scales_like_inverse_sqrt_m(self):
        # Halving the sample budget should inflate the one-step error by
        # about sqrt(2) under the with-replacement model; the average
        # ratio stays inside [1.2, 1.7].
        n, r = 80, 2
        m = int(0.4 * n * n)
        ratios = []
        for seed in range(20):
            X = random_lowrank(n, r, 3000 + seed)
            S_full = sample_with_replacement(n, m, 4000 + seed)
            S_half = sample_with_replacement(n, m // 2, 5000 + seed)
            e_full = rel_error(init_one_step(ObservedData.observe(S_full, X), r), X)
            e_half = rel_error(init_one_step(ObservedData.observe(S_half, X), r), X)
            ratios.append(e_half / e_full)
        mean_ratio = float(np.mean(ratios))
        assert 1.2 <= mean_ratio <= 1.7


class TestTrim:
    def test_identity_below_cap(self):
        Z = random_lowrank(40, 3, 1)
        mu0 = incoherence_report(Z).mu0
        Zt = trim(Z, mu0 * 1.01)
        assert rel_error(Zt, Z) <= 1e-12

    def test_forced_cap_on_spiky_rank_one(self):
        n = 4
        U = np.zeros((n, 1)); U[0, 0] = 1.0
        V = np.full((n, 1), 0.5)
        from lrmc.linalg import LowRankMatrix

        Z = LowRankMatrix(n, n, 1, U, np.array([2.0]), V)
        A, sigma, B = trim_factors(Z, 1.0)  # cap = sqrt(1/4) = 0.5
        assert np.allclose(A[0], [0.5])
        assert np.allclose(A[1:], 0.0)
        assert np.allclose(B, V)  # already at the cap
        expected = 0.5 * 2.0 * np.outer(np.eye(n)[0], V[:, 0])
        Zt = trim(Z, 1.0)
        assert np.linalg.norm(Zt.dense() - expected) <= 1e-12

    def test_refactored_output_matches_capped_product(self):
        rng = np.random.default_rng(2)
        # Make an incoherence violator: one heavy row.
        n, r = 30, 2
        U, _ = np.linalg.qr(rng.standard_normal((n, r)))
        U[0] *= 6.0
        U, _ = np.linalg.qr(U)
        V, _ = np.linalg.qr(rng.standard_normal((n, r)))
        from lrmc.linalg import LowRankMatrix

        Z = LowRankMatrix(n, n, r, U, np.array([3.0, 1.0]), V)
        cap = 0.8 * incoherence_report(Z).mu0
        A, sigma, B = trim_factors(Z, cap)
        product = (A * sigma) @ B.T
        Zt = trim(Z, cap)
        assert np.linalg.norm(Zt.dense() - product) <= 1e-12 * np.linalg.norm(product)

    def test_never_increases_row_norms_or_rotates_rows(self):
        rng = np.random.default_rng(3)
        for k in range(50):
            Z = random_lowrank(25, 3, 600 + k)
            cap = 0.5 * incoherence_report(Z).mu0
            A, _, B = trim_factors(Z, cap)
            for F, orig in ((A, Z.U), (B, Z.V)):
                norms_new = np.linalg.norm(F, axis=1)
                norms_old = np.linalg.norm(orig, axis=1)
                assert np.all(norms_new <= norms_old + 1e-15)
                nz = norms_new > 0
                cosines = np.sum(F[nz] * orig[nz], axis=1) / (norms_new[nz] * norms_old[nz])
                assert np.all(cosines >= 1.0 - 1e-12)

    def test_zero_rows_pass_through(self):
        n = 5
        U = np.zeros((n, 1)); U[2, 0] = 1.0
        V = np.zeros((n, 1)); V[3, 0] = 1.0
        from lrmc.linalg import LowRankMatrix

        Z = LowRankMatrix(n, n, 1, U, np.array([1.0]), V)
        A, _, B = trim_factors(Z, 10.0)
        assert np.array_equal(A, U)
        assert np.array_equal(B, V)

    def test_incoherence_bound_inside_lemma_radius(self):
        # Perturb an incoherent matrix within sigma_min / (10 sqrt(2)) and
        # trim at its own mu0: the re-orthonormalized rows stay within
        # 10/9 of the cap.
        from lrmc.tangent import random_tangent, retract

        n, r = 60, 2
        for seed in range(20):
            X = random_lowrank(n, r, 7000 + seed)
            mu0 = incoherence_report(X).mu0
            radius = X.sigma[r - 1] / (10.0 * math.sqrt(2.0))
            rng = np.random.default_rng(seed)
            T = random_tangent(X, rng)
            Z = retract(X, T.scaled(0.45 * radius / T.norm()))
            if rel_error(Z, X) * X.frob_norm() > radius:
                continue
            Zt = trim(Z, mu0)
            cap = math.sqrt(mu0 * r / n)
            worst = max(np.linalg.norm(Zt.U, axis=1).max(),
                        np.linalg.norm(Zt.V, axis=1).max())
            assert worst <= (10.0 / 9.0) * cap * (1.0 + 1e-10)


class TestResampled:
    def test_exact_with_full_sampling_groups(self):
        # Both groups see every entry: the first truncation is already
        # exact and the gradient round keeps the fixpoint.
        n, r = 15, 2
        X = random_lowrank(n, r, 4)
        mu0 = incoherence_report(X).mu0
        groups = [ObservedData.observe(full_sampling_set(n), X) for _ in range(2)]
        Z = resampled_rounds(groups, r, mu0)
        assert rel_error(Z, X) <= 1e-10

    def test_fixpoint_when_started_at_truth(self):
        n, r = 20, 2
        X = random_lowrank(n, r, 5)
        mu0 = incoherence_report(X).mu0 * 1.01
        data = ObservedData.observe(sample_without_replacement(n, 300, 6), X)
        from lrmc.sampling import partition_observed

        groups = partition_observed(data, 1, 0)
        # Hand the scheme a start equal to the truth by replacing group 0
        # with a full-sampling view.
        groups[0] = ObservedData.observe(full_sampling_set(n), X)
        Z = resampled_rounds(groups, r, mu0)
        assert rel_error(Z, X) <= 1e-9

    def test_groups_consumed_once_in_order(self):
        n, r = 40, 2
        X = random_lowrank(n, r, 7)
        m = 1200
        data = ObservedData.observe(sample_without_replacement(n, m, 8), X)
        opts = InitOptions(scheme="resampled_trimmed", L=3, mu0_cap=5.0, seed=9)
        Z, info = init_resampled(data, r, opts, return_info=True)
        assert info.rounds == [1, 2, 3]
        assert sum(info.group_sizes) == m
        assert len(info.group_sizes) == 4

    def test_error_contracts_on_majority_of_rounds(self):
        # Round-over-round error ratios stay below 5/6 on a majority of
        # rounds when each group carries at least 0.1 n^2 samples.
        n, r, L = 100, 2, 3
        m_hat = int(0.1 * n * n)
        m = (L + 1) * m_hat
        good = 0
        total = 0
        for seed in range(10):
            X = random_lowrank_with_spectrum(n, r, [2.0, 1.0], 8000 + seed)
            data = ObservedData.observe(sample_without_replacement(n, m, 8100 + seed), X)
            mu0 = incoherence_report(X).mu0
            from lrmc.sampling import partition_observed

            groups = partition_observed(data, L, seed)
            Z = init_one_step(groups[0], r)
            prev = rel_error(Z, X)
            errors = [prev]
            Z_cur = Z
            for g in groups[1:]:
                from lrmc.tangent import project_to_tangent, retract

                Zh = trim(Z_cur, mu0)
                S = g.sampling
                diff = g.values - Zh.entries(S.rows, S.cols)
                T = project_to_tangent(Zh, S.sparse_with(S.mult * diff / S.p))
                Z_cur = retract(Zh, T)
                errors.append(rel_error(Z_cur, X))
            ratios = np.array(errors[1:]) / np.array(errors[:-1])
            good += np.sum(ratios <= 5.0 / 6.0)
            total += ratios.size
        assert good > total / 2

    def test_rounds_improve_on_group_zero_start(self):
        # The gradient rounds must improve on the truncation that seeds
        # them (the one-step estimate computed from group 0 alone).
        n, r, L = 100, 2, 5
        m = int(0.5 * n * n)
        wins = 0
        for seed in range(10):
            X = random_lowrank_with_spectrum(n, r, [2.0, 1.0], 100 + seed)
            data = ObservedData.observe(sample_without_replacement(n, m, 200 + seed), X)
            mu0 = incoherence_report(X).mu0
            from lrmc.sampling import partition_observed

            groups = partition_observed(data, L, seed)
            e_start = rel_error(init_one_step(groups[0], r), X)
            opts = InitOptions(scheme="resampled_trimmed", L=L, mu0_cap=mu0, seed=seed)
            e_final = rel_error(init_resampled(data, r, opts), X)
            wins += e_final < e_start
        assert wins >= 8

    @pytest.mark.xfail(
        reason="splitting the same budget across L+1 groups starves every "
        "stage at this scale; the resampled estimate loses to one-step on "
        "the full sample set on every tested seed (0/10 across L in 1..5)",
        strict=True,
    )
    def test_resampled_beats_full_budget_one_step(self):
        n, r, L = 100, 2, 5
        m = int(0.5 * n * n)
        wins = 0
        for seed in range(10):
            X = random_lowrank_with_spectrum(n, r, [2.0, 1.0], 100 + seed)
            data = ObservedData.observe(sample_without_replacement(n, m, 200 + seed), X)
            mu0 = incoherence_report(X).mu0
            e_one = rel_error(init_one_step(data, r), X)
            opts = InitOptions(scheme="resampled_trimmed", L=L, mu0_cap=mu0, seed=seed)
            e_res = rel_error(init_resampled(data, r, opts), X)
            wins += e_res < e_one
        assert wins >= 8

    def test_group_too_small_raises(self):
        n, r = 20, 3
        X = random_lowrank(n, r, 10)
        # Two draws per group cannot span rank 3.
        data = ObservedData.observe(sample_without_replacement(n, 8, 11), X)
        opts = InitOptions(scheme="resampled_trimmed", L=3, mu0_cap=4.0, seed=0)
        with pytest.raises(InitFailureError):
            init_resampled(data, r, opts)

    def test_literal_scaling_flag(self):
        n, r = 25, 2
        X = random_lowrank(n, r, 12)
        data = ObservedData.observe(sample_without_replacement(n, 400, 13), X)
        mu0 = incoherence_report(X).mu0
        a = init_resampled(data, r, InitOptions(
            scheme="resampled_trimmed", L=1, mu0_cap=mu0, seed=1, z0_scaling="inverse_p"))
        b = init_resampled(data, r, InitOptions(
            scheme="resampled_trimmed", L=1, mu0_cap=mu0, seed=1, z0_scaling="literal"))
        # The literal text scales the first truncation by p instead of 1/p,
        # which shrinks the start by p^2; the rounds see different iterates.
        assert rel_error(a, b) > 1e-6
