import math

import numpy as np
import pytest

import dupcox as dc
from dupcox.errors import EstimationError
from oracles import (
    brute_force_loglik,
    central_difference_gradient,
    central_difference_jacobian,
    golden_section_max,
    plain_design,
    random_design,
    sandwich_from_residuals,
)

# Binary-covariate cohort used throughout: x = (1, 0, 1, 0), events at times
# 1 < 2 < 3, fourth row censored at 4.  Values below were produced by the
# brute-force risk-set oracle before the engine was written.
FOUR_X = np.array([[1.0], [0.0], [1.0], [0.0]])
FOUR_EXIT = np.array([1.0, 2.0, 3.0, 4.0])
FOUR_EVENT = np.array([True, True, True, False])
FOUR_LL_AT_HALF = -2.9356779183378015
FOUR_SCORE_AT_ZERO = 2.0 / 3.0


def four_row_design():
    return plain_design(FOUR_X, FOUR_EXIT, FOUR_EVENT)


class TestLogPartialLikelihood:
    def test_three_rows_beta_zero_counts_risk_sets(self):
        d = plain_design(np.zeros((3, 1)), [1.0, 2.0, 3.0], [1, 1, 1])
        assert dc.log_partial_likelihood(d, [0.0]) == pytest.approx(-math.log(6), abs=1e-12)

    def test_singleton_risk_set_is_zero(self):
        d = plain_design(np.ones((1, 1)), [5.0], [1])
        assert dc.log_partial_likelihood(d, [0.0]) == 0.0

    def test_four_row_example_at_half(self):
        d = four_row_design()
        value = dc.log_partial_likelihood(d, [0.5], "breslow")
        assert value == pytest.approx(FOUR_LL_AT_HALF, abs=1e-12)
        assert dc.log_partial_likelihood(d, [0.5], "efron") == pytest.approx(
            FOUR_LL_AT_HALF, abs=1e-12)

    def test_no_events_is_an_error(self):
        d = plain_design(np.ones((2, 1)), [1.0, 2.0], [0, 0])
        with pytest.raises(EstimationError, match="no informative strata"):
            dc.log_partial_likelihood(d, [0.0])

    @pytest.mark.parametrize("ties", [False, True])
    @pytest.mark.parametrize("method", ["breslow", "efron"])
    def test_matches_brute_force_enumeration(self, ties, method):
        rng = np.random.default_rng(101 if ties else 202)
        for _ in range(25):
            d = random_design(rng, n=int(rng.integers(3, 9)), p=2, ties=ties,
                              truncation=True, n_strata=int(rng.integers(1, 3)))
            beta = rng.standard_normal(2)
            got = dc.log_partial_likelihood(d, beta, method)
            want = brute_force_loglik(d.entry, d.exit, d.event, d.X, beta,
                                      d.strata_key, method)
            assert got == pytest.approx(want, abs=1e-10)

    def test_efron_equals_breslow_without_ties(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            d = random_design(rng, n=7, p=2, ties=False, truncation=True)
            beta = rng.standard_normal(2)
            assert dc.log_partial_likelihood(d, beta, "efron") == \
                dc.log_partial_likelihood(d, beta, "breslow")

    def test_stratified_equals_sum_of_per_stratum(self):
        rng = np.random.default_rng(44)
        d = random_design(rng, n=12, p=2, ties=True, truncation=True, n_strata=3)
        beta = np.array([0.3, -0.2])
        total = dc.log_partial_likelihood(d, beta)
        parts = 0.0
        for key in np.unique(d.strata_key.astype(str)):
            rows = d.strata_key == key
            if not d.event[rows].any():
                continue
            sub = plain_design(d.X[rows], d.exit[rows], d.event[rows],
                               entry=d.entry[rows])
            parts += dc.log_partial_likelihood(sub, beta)
        assert total == parts


class TestScoreInformation:
    def test_score_at_zero_binary_covariate(self):
        got = dc.score(four_row_design(), [0.0])
        assert got[0] == pytest.approx(FOUR_SCORE_AT_ZERO, abs=1e-14)

    def test_constant_within_risk_sets_gives_zero(self):
        d = plain_design(np.ones((4, 1)), [1.0, 2.0, 3.0, 4.0], [1, 1, 0, 1])
        assert dc.score(d, [0.7])[0] == pytest.approx(0.0, abs=1e-14)
        assert dc.information(d, [0.7])[0, 0] == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("method", ["breslow", "efron"])
    def test_score_matches_finite_differences(self, method):
        rng = np.random.default_rng(55)
        for _ in range(10):
            d = random_design(rng, n=8, p=3, ties=True, truncation=True, n_strata=2)
            beta = rng.standard_normal(3) * 0.5
            got = dc.score(d, beta, method)
            want = central_difference_gradient(
                lambda b: dc.log_partial_likelihood(d, b, method), beta)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-8)

    @pytest.mark.parametrize("method", ["breslow", "efron"])
    def test_information_matches_score_jacobian(self, method):
        rng = np.random.default_rng(66)
        for _ in range(10):
            d = random_design(rng, n=8, p=2, ties=True, truncation=True)
            beta = rng.standard_normal(2) * 0.5
            got = dc.information(d, beta, method)
            want = -central_difference_jacobian(lambda b: dc.score(d, b, method), beta)
            assert got == pytest.approx(want, rel=1e-5, abs=1e-7)

    def test_information_symmetric_psd(self):
        rng = np.random.default_rng(77)
        d = random_design(rng, n=10, p=3, ties=True, truncation=True, n_strata=2)
        info = dc.information(d, rng.standard_normal(3))
        assert np.max(np.abs(info - info.T)) <= 1e-10 * max(np.max(np.abs(info)), 1.0)
        assert np.linalg.eigvalsh(info).min() >= -1e-10


class TestFit:
    def test_one_dimensional_fit_matches_golden_section(self):
        d = four_row_design()
        result = dc.fit(d)
        oracle = golden_section_max(
            lambda b: brute_force_loglik(d.entry, d.exit, d.event, d.X, [b]), -5.0, 5.0)
        assert result.converged
        assert result.coefficients[0] == pytest.approx(oracle, abs=1e-6)

    def test_score_norm_at_optimum_below_tolerance(self):
        rng = np.random.default_rng(88)
        d = random_design(rng, n=30, p=2, ties=True, truncation=False)
        result = dc.fit(d)
        assert result.converged
        beta = result.coefficients
        assert np.abs(dc.score(d, beta)).max() <= result.options.gradient_tolerance

    def test_perfect_separation_diagnosed(self):
        d = plain_design(np.array([[1.0], [0.0]]), [1.0, 2.0], [1, 0])
        result = dc.fit(d, robust=False)
        assert result.diagnostics.separation_suspected
        assert "separation" in result.diagnostics.message

    def test_duplicated_column_aliased(self):
        rng = np.random.default_rng(99)
        x = rng.standard_normal(12)
        d = plain_design(np.column_stack([x, x]),
                         rng.uniform(1, 5, size=12),
                         rng.integers(0, 2, size=12))
        result = dc.fit(d, robust=False)
        assert result.aliased_mask.tolist() == [False, True]
        assert np.isnan(result.coefficients[1])
        assert result.converged
        assert np.isnan(result.model_covariance[1]).all()

    def test_no_events_raises(self):
        d = plain_design(np.ones((2, 1)), [1.0, 2.0], [0, 0])
        with pytest.raises(EstimationError, match="no informative strata"):
            dc.fit(d)

    def test_time_transform_invariance(self):
        rng = np.random.default_rng(111)
        d = random_design(rng, n=20, p=2, ties=False, truncation=True)
        base = dc.fit(d, robust=False)
        warped = plain_design(d.X, d.exit ** 3, d.event, entry=d.entry ** 3,
                              strata=d.strata_key)
        other = dc.fit(warped, robust=False)
        assert other.coefficients == pytest.approx(base.coefficients, abs=1e-8)

    def test_zero_event_strata_skipped_with_count(self):
        X = np.array([[0.5], [-0.5], [1.0], [-1.0]])
        d = plain_design(X, [1.0, 2.0, 1.5, 2.5], [1, 1, 0, 0],
                         strata=["a", "a", "b", "b"])
        result = dc.fit(d, robust=False)
        assert result.diagnostics.n_strata_used == 1
        assert result.diagnostics.n_strata_skipped == 1


class TestScoreResiduals:
    @pytest.mark.parametrize("method", ["breslow", "efron"])
    def test_residuals_sum_to_score(self, method):
        rng = np.random.default_rng(123)
        for _ in range(10):
            d = random_design(rng, n=9, p=2, ties=True, truncation=True, n_strata=2)
            beta = rng.standard_normal(2) * 0.4
            resid = dc.score_residuals(d, beta, method)
            assert resid.sum(axis=0) == pytest.approx(
                dc.score(d, beta, method), abs=1e-10)

    def test_eventless_stratum_rows_are_zero(self):
        d = plain_design(np.array([[1.0], [0.0], [1.0]]), [1.0, 2.0, 3.0],
                         [1, 0, 0], strata=["a", "a", "b"])
        resid = dc.score_residuals(d, [0.2])
        assert resid[2, 0] == 0.0


class TestRobustCovariance:
    def test_singleton_clusters_match_dense_oracle(self):
        rng = np.random.default_rng(7)
        d = random_design(rng, n=15, p=2, ties=True, truncation=False)
        result = dc.fit(d)
        beta = result.coefficients
        resid = dc.score_residuals(d, beta)
        info = dc.information(d, beta)
        oracle = sandwich_from_residuals(resid, d.cluster_id, info)
        assert result.robust_covariance == pytest.approx(oracle, abs=1e-12)

    def test_duplicated_copies_share_cluster(self):
        # Two identical copies of a small cohort, cluster-tied by subject.
        rng = np.random.default_rng(8)
        n = 10
        x = rng.standard_normal(n)
        exit_ = rng.uniform(1, 4, size=n)
        event = rng.uniform(size=n) < 0.6
        event[0] = True
        d = plain_design(
            np.concatenate([x, x]).reshape(-1, 1),
            np.concatenate([exit_, exit_]),
            np.concatenate([event, event]),
            strata=["c1"] * n + ["c2"] * n,
            cluster=[str(i) for i in range(n)] * 2,
        )
        result = dc.fit(d)
        beta = result.coefficients
        resid = dc.score_residuals(d, beta)
        oracle = sandwich_from_residuals(resid, d.cluster_id, dc.information(d, beta))
        assert result.robust_covariance == pytest.approx(oracle, abs=1e-12)

    def test_symmetry_on_random_instances(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            d = random_design(rng, n=12, p=3, ties=True, truncation=True)
            result = dc.fit(d)
            if not result.converged:
                continue
            b = result.robust_covariance
            assert np.max(np.abs(b - b.T)) <= 1e-10 * np.max(np.abs(b))

    def test_requires_converged_fit(self):
        d = plain_design(np.array([[1.0], [0.0]]), [1.0, 2.0], [1, 0])
        result = dc.fit(d, dc.FitOptions(max_iterations=1), robust=False)
        if result.converged:
            pytest.skip("separation converged unexpectedly fast")
        with pytest.raises(EstimationError, match="converged"):
            dc.robust_covariance(d, result)
