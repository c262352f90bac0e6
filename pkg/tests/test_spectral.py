import math

import numpy as np
import pytest

from spectral_uq.spectral import (cluster, cond_estimate, eig_adaptive,
                                  eig_randomized, eig_with_ladder,
                                  stability_guard)


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


class TestCondEstimate:
    def test_identity(self):
        assert cond_estimate(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal(self):
        # 1-norm of a diagonal matrix is its largest absolute entry.
        assert cond_estimate(np.diag([1.0, 10.0])) == pytest.approx(10.0)

    def test_singular_is_inf(self):
        assert cond_estimate(np.zeros((3, 3))) == np.inf
        assert cond_estimate(np.diag([1.0, 0.0])) == np.inf

    def test_within_factor_five_of_exact(self):
        # Oracle: exact kappa_1 from dense inversion.
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = rng.standard_normal((8, 8))
            spd = a @ a.T + 0.1 * np.eye(8)
            exact = np.linalg.norm(spd, 1) * np.linalg.norm(np.linalg.inv(spd), 1)
            est = cond_estimate(spd)
            assert exact / 5 <= est <= exact * 5

    def test_nonfinite_raises(self):
        with pytest.raises(ValueError):
            cond_estimate(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestEigAdaptive:
    def test_identity_all_low_confidence(self):
        d = eig_adaptive(np.eye(4))
        np.testing.assert_allclose(d.eigenvalues, np.ones(4))
        assert d.reconstruction_error == 0.0
        assert d.low_confidence.all()      # zero gaps

    def test_simple_diagonal(self):
        d = eig_adaptive(np.diag([1.0, 2.0, 3.0]), data_sigma=0.1)
        np.testing.assert_allclose(d.eigenvalues, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(d.gaps, [1.0, 1.0, 1.0])
        assert d.precision_tier == "standard"
        assert not d.low_confidence.any()
        assert d.reliable

    def test_near_degenerate_pair_flagged(self):
        # Constructed from known factors: two eigenvalues 1e-13 apart.
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        p = q @ np.diag([1.0, 1.0 + 1e-13, 5.0]) @ q.T
        d = eig_adaptive((p + p.T) / 2)
        assert d.low_confidence[0] and d.low_confidence[1]
        assert not d.low_confidence[2]

    def test_snr_flag(self):
        d = eig_adaptive(np.diag([0.05, 2.0, 3.0]), data_sigma=0.1)
        assert d.low_confidence[0]          # |0.05|/0.1 < 1
        assert not d.low_confidence[1:].any()

    def test_eigenvalues_sorted_and_orthonormal(self):
        rng = np.random.default_rng(4)
        for n in (3, 8, 17):
            d = eig_adaptive(random_symmetric(rng, n))
            assert np.all(np.diff(d.eigenvalues) >= 0)
            assert np.linalg.norm(d.eigenvectors.T @ d.eigenvectors - np.eye(n)) <= 1e-8

    def test_reconstruction_invariant(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            d = eig_adaptive(random_symmetric(rng, 10))
            assert d.reliable
            assert d.reconstruction_error <= 100 * d.tolerance

    def test_regularized_tier_for_extreme_conditioning(self):
        p = np.diag([1.0, 1e-14])
        p[0, 1] = p[1, 0] = 1e-15
        d = eig_adaptive(p)
        assert d.precision_tier == "regularized"
        np.testing.assert_allclose(np.sort(d.eigenvalues),
                                   np.sort(np.linalg.eigvalsh(p)), atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            eig_adaptive(np.array([[1.0, np.inf], [np.inf, 1.0]]))

    def test_weyl_property(self):
        # max_i |lam_i(A+E) - lam_i(A)| <= ||E||_2 + 1e-10
        rng = np.random.default_rng(8)
        for trial in range(15):
            n = int(rng.choice([4, 8, 16]))
            a = random_symmetric(rng, n)
            e = 0.1 * random_symmetric(rng, n)
            shift = np.abs(eig_adaptive(a + e).eigenvalues - eig_adaptive(a).eigenvalues)
            assert shift.max() <= np.linalg.norm(e, 2) + 1e-10


class TestEigRandomized:
    def test_rank_two_planted(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal(20)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(20)
        v -= (v @ u) * u
        v /= np.linalg.norm(v)
        p = 5 * np.outer(u, u) + 3 * np.outer(v, v)
        res = eig_randomized(p, k=2, oversample=8, tol=1e-8)
        np.testing.assert_allclose(np.sort(res.eigenvalues), [3.0, 5.0], atol=1e-8)
        assert res.residual_bound <= 1e-8

    def test_zero_matrix(self):
        res = eig_randomized(np.zeros((10, 10)), k=2, oversample=3, tol=1e-8)
        np.testing.assert_array_equal(res.eigenvalues, 0.0)
        assert res.residual_bound == 0.0

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(3)
        p = random_symmetric(rng, 30)
        res = eig_randomized(p, k=4, oversample=6, tol=1e-3)
        gram = res.eigenvectors.T @ res.eigenvectors
        assert np.linalg.norm(gram - np.eye(4)) <= 1e-8

    def test_eigenvalues_within_residual_of_exact(self):
        # Dense solve is the oracle; the residual bound dominates the
        # distance from each Ritz value to the true spectrum.
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = random_symmetric(rng, 50)
            res = eig_randomized(p, k=5, oversample=5, tol=1e-8)
            exact = np.linalg.eigvalsh(p)
            for lam in res.eigenvalues:
                assert np.min(np.abs(exact - lam)) <= res.residual_bound + 1e-12

    def test_residual_recomputed_from_truncated_factors(self):
        rng = np.random.default_rng(9)
        p = random_symmetric(rng, 40)
        res = eig_randomized(p, k=3, oversample=4, tol=1e-10)
        recomputed = np.linalg.norm(p @ res.eigenvectors
                                    - res.eigenvectors * res.eigenvalues)
        assert res.residual_bound == pytest.approx(recomputed, rel=1e-12)

    def test_width_validation(self):
        with pytest.raises(ValueError):
            eig_randomized(np.eye(5), k=3, oversample=2, tol=1e-6)
        with pytest.raises(ValueError):
            eig_randomized(np.eye(5), k=0, oversample=1, tol=1e-6)


class TestCluster:
    def test_tau_formula_and_grouping(self):
        # tau_N = sqrt(ln 1e6 / 1e6), evaluated directly.
        lam = np.array([1.0, 1.0 + 1e-7, 5.0])
        cl = cluster(lam, tau_num=1e-6, n_data=10 ** 6, scale_c=1.0)
        assert cl.tau_n == pytest.approx(math.sqrt(math.log(1e6) / 1e6))
        assert cl.tau_n == pytest.approx(3.7169e-3, rel=1e-4)
        np.testing.assert_array_equal(cl.assignment, [0, 0, 1])

    def test_singletons(self):
        cl = cluster(np.array([0.0, 1.0, 2.0, 3.0]), tau_num=1e-6, n_data=100,
                     scale_c=0.0)
        assert cl.n_clusters == 4
        np.testing.assert_allclose(cl.external_gap, 1.0)
        np.testing.assert_allclose(cl.internal_gap, 0.0)

    def test_all_equal_single_cluster(self):
        cl = cluster(np.full(5, 2.5), tau_num=1e-6, n_data=100, scale_c=0.0)
        assert cl.n_clusters == 1
        assert cl.internal_gap[0] == 0.0
        assert np.isinf(cl.external_gap[0])

    def test_members_near_centroid(self):
        rng = np.random.default_rng(12)
        lam = np.sort(rng.standard_normal(30))
        cl = cluster(lam, tau_num=1e-3, n_data=500, scale_c=1.0)
        for c in range(cl.n_clusters):
            members = lam[cl.assignment == c]
            assert np.all(np.abs(members - cl.centroids[c]) < cl.tau_n + 1e-12)

    def test_clusters_contiguous(self):
        rng = np.random.default_rng(13)
        lam = np.sort(rng.standard_normal(40))
        cl = cluster(lam, tau_num=1e-2, n_data=50, scale_c=1.0)
        assert np.all(np.diff(cl.assignment) >= 0)

    def test_idempotence_on_centroids(self):
        rng = np.random.default_rng(14)
        lam = np.sort(np.concatenate([rng.normal(0, 1e-8, 3),
                                      rng.normal(5, 1e-8, 4),
                                      rng.normal(11, 1e-8, 2)]))
        cl = cluster(lam, tau_num=1e-4, n_data=10 ** 4, scale_c=1.0)
        again = cluster(np.sort(cl.centroids), tau_num=1e-4, n_data=10 ** 4,
                        scale_c=1.0)
        assert again.n_clusters == cl.n_clusters

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            cluster(np.array([1.0, 0.5]), tau_num=1e-6, n_data=100)


class TestStabilityGuard:
    def test_passthrough_for_well_conditioned(self):
        p = np.diag([1.0, 2.0])
        guarded, log = stability_guard(p)
        np.testing.assert_array_equal(guarded, p)
        assert not log.preconditioned
        assert log.events == []

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            stability_guard(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_preconditions_extreme_matrix(self):
        # Constructed kappa ~ 1e14 via tiny diagonal plus coupling.
        p = np.diag([1.0, 1e-14])
        p[0, 1] = p[1, 0] = 1e-15
        guarded, log = stability_guard(p)
        assert log.preconditioned
        assert log.scale is not None
        assert any("preconditioned" in e for e in log.events)
        # Rescaling brings the conditioning down by many orders of magnitude,
        # and the recorded transform restores the original matrix exactly.
        assert cond_estimate(guarded) < 1e-6 * cond_estimate(p)
        np.testing.assert_allclose(log.restore(guarded), p, rtol=1e-12)


class TestLadder:
    def test_clean_matrix_no_events(self):
        lam, v, events = eig_with_ladder(np.diag([1.0, 2.0]))
        assert events == []
        np.testing.assert_allclose(lam, [1.0, 2.0])

    def test_nonfinite_rejected_before_work(self):
        with pytest.raises(ValueError):
            eig_with_ladder(np.array([[np.inf, 0.0], [0.0, 1.0]]))
