"""Population pairs, importance weights, outcome models, covariate CSV."""

import math

import numpy as np
import pytest

import targetbalance as tb


def pop_1d(mu_s=1.0, delta=0.3):
    return tb.GaussianPopulationPair(np.array([mu_s]), np.array([mu_s + delta]))


class TestLogDensityRatio:
    def test_identical_populations(self):
        pop = tb.GaussianPopulationPair(np.ones(3), np.ones(3))
        x = np.random.default_rng(0).standard_normal((50, 3))
        np.testing.assert_array_equal(tb.log_density_ratio(pop, x), np.zeros(50))
        np.testing.assert_array_equal(tb.importance_weights(pop, x), np.ones(50))

    def test_closed_form_point(self):
        # delta (x - mu_S) - delta^2 / 2 = 0 - 0.045
        pop = pop_1d(mu_s=1.0, delta=0.3)
        lr = tb.log_density_ratio(pop, np.array([1.0]))
        assert lr == pytest.approx(-0.045, abs=1e-15)
        assert math.exp(lr) == pytest.approx(0.955997, abs=1e-6)

    def test_midpoint_weight_exactly_one(self):
        pop = tb.GaussianPopulationPair(np.array([0.5, -1.0]), np.array([1.25, 0.5]))
        x = pop.mu_source + pop.delta / 2
        assert tb.log_density_ratio(pop, x) == 0.0

    def test_density_identity(self):
        # exp(log ratio) carries the unnormalized source density onto the
        # target density, pointwise to 1e-12 relative.
        rng = np.random.default_rng(1)
        pop = tb.GaussianPopulationPair(np.array([1.0, 0.0, 2.0]), np.array([1.4, 0.3, 1.5]))
        x = pop.mu_source + rng.standard_normal((1_000, 3))
        log_src = -0.5 * np.sum((x - pop.mu_source) ** 2, axis=1)
        log_tgt = -0.5 * np.sum((x - pop.mu_target) ** 2, axis=1)
        ratio = np.exp(tb.log_density_ratio(pop, x) + log_src - log_tgt)
        np.testing.assert_allclose(ratio, 1.0, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tb.log_density_ratio(pop_1d(), np.array([1.0, 2.0]))


class TestNestedTrialWeight:
    def test_selection_independent_of_x(self):
        assert tb.nested_trial_weight(0.3, 0.3) == pytest.approx(1.0)

    def test_quoted_arithmetic(self):
        assert tb.nested_trial_weight(0.8, 0.5) == pytest.approx(0.25)

    @pytest.mark.parametrize("p_x,p", [(1.0, 0.5), (0.0, 0.5), (0.5, 1.0), (0.5, 0.0)])
    def test_overlap_violation(self, p_x, p):
        with pytest.raises(ValueError):
            tb.nested_trial_weight(p_x, p)


class TestClipWeights:
    def test_quoted_rule(self):
        out = tb.clip_weights(np.array([50.0]), tb.WeightPolicy(40.0))
        np.testing.assert_array_equal(out, [40.0])

    def test_inactive_clip(self):
        w = np.array([1.0, 2.0, 39.9])
        np.testing.assert_array_equal(tb.clip_weights(w, tb.WeightPolicy(40.0)), w)

    def test_boundary_non_strict(self):
        out = tb.clip_weights(np.array([5.0, 40.0, 40.0001]), tb.WeightPolicy(40.0))
        np.testing.assert_array_equal(out, [5.0, 40.0, 40.0])

    def test_none_policy_identity(self):
        w = np.array([0.5, 90.0])
        np.testing.assert_array_equal(tb.clip_weights(w, tb.WeightPolicy(None)), w)

    def test_pointwise_dominated(self):
        rng = np.random.default_rng(2)
        w = np.exp(rng.standard_normal(500) * 2)
        clipped = tb.clip_weights(w, tb.WeightPolicy(3.0))
        assert np.all(clipped <= 3.0) and np.all(clipped <= w)


class TestSampleCovariates:
    def test_source_moments(self):
        rng = np.random.default_rng(3)
        pop = tb.GaussianPopulationPair(np.ones(2), np.ones(2) + 0.3)
        x = tb.sample_covariates(pop, "source", 1_000_000, rng)
        # CLT bands: 4 sigma / sqrt(n) for the mean, looser for the variance
        np.testing.assert_allclose(x.mean(axis=0), 1.0, atol=0.004)
        np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.01)
        off_diag = np.cov(x.T)[0, 1]
        assert abs(off_diag) < 0.01

    def test_target_mean_shifted(self):
        rng = np.random.default_rng(4)
        pop = tb.GaussianPopulationPair(np.ones(2), np.ones(2) + 0.3)
        x = tb.sample_covariates(pop, "target", 1_000_000, rng)
        np.testing.assert_allclose(x.mean(axis=0), 1.3, atol=0.004)

    def test_box_muller_stream_positions(self):
        # Odd and even requests consume the same number of uniforms, so the
        # stream position after a call depends only on ceil(m/2).
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        tb.standard_normals(r1, 5)
        tb.standard_normals(r2, 6)
        assert r1.random() == r2.random()


class TestGenerateOutcomes:
    def test_linear_noise_free_difference(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((40, 3))
        model = tb.OutcomeModel("linear", noise_sd=0.0)
        y0, y1 = tb.generate_outcomes(model, x, rng)
        np.testing.assert_allclose(y1 - y0, 2.0 * x.sum(axis=1), rtol=1e-14)

    def test_nonlinear_noise_free_difference(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((40, 3))
        model = tb.OutcomeModel("nonlinear", noise_sd=0.0)
        y0, y1 = tb.generate_outcomes(model, x, rng)
        np.testing.assert_allclose(y1 - y0, np.einsum("ij,ij->i", x, x), rtol=1e-12)

    def test_zero_covariate_noise_distribution(self):
        rng = np.random.default_rng(7)
        x = np.zeros((100_000, 1))
        y0, y1 = tb.generate_outcomes(tb.OutcomeModel("linear"), x, rng)
        for y in (y0, y1):
            assert 0.97 <= y.var() <= 1.03
            assert abs(y.mean()) < 0.015

    def test_linear_residuals_against_coefficients(self):
        # The linear model has coefficient vectors of ones (control) and
        # three-times-ones (treated); residual means shrink like 1/sqrt(n).
        rng = np.random.default_rng(8)
        n = 100_000
        x = rng.standard_normal((n, 4)) + 1.0
        y0, y1 = tb.generate_outcomes(tb.OutcomeModel("linear"), x, rng)
        resid0 = y0 - x @ np.ones(4)
        resid1 = y1 - x @ (3.0 * np.ones(4))
        assert abs(resid0.mean()) <= 4.0 / math.sqrt(n)
        assert abs(resid1.mean()) <= 4.0 / math.sqrt(n)

    def test_arm_noise_independent(self):
        rng = np.random.default_rng(9)
        x = np.zeros((200_000, 1))
        y0, y1 = tb.generate_outcomes(tb.OutcomeModel("linear"), x, rng)
        corr = np.corrcoef(y0, y1)[0, 1]
        assert abs(corr) < 0.01


class TestTrueTargetAte:
    def test_linear_1d(self):
        pop = pop_1d(mu_s=1.0, delta=0.3)
        assert tb.true_target_ate(tb.OutcomeModel("linear"), pop) == pytest.approx(2.6)

    def test_nonlinear_d10(self):
        pop = tb.GaussianPopulationPair.isotropic_shift(10, 0.2)
        assert tb.true_target_ate(tb.OutcomeModel("nonlinear"), pop) == pytest.approx(24.4)

    def test_importance_sampling_oracle(self):
        # mean of w * (y1 - y0) over source draws estimates the target ATE.
        rng = np.random.default_rng(10)
        pop = tb.GaussianPopulationPair.isotropic_shift(10, 0.0)
        model = tb.OutcomeModel("linear")
        x = tb.sample_covariates(pop, "source", 1_000_000, rng)
        w = tb.importance_weights(pop, x)
        y0, y1 = tb.generate_outcomes(model, x, rng)
        vals = w * (y1 - y0)
        se = vals.std() / math.sqrt(vals.size)
        assert abs(vals.mean() - 20.0) <= 4 * se

    def test_importance_sampling_oracle_shifted(self):
        rng = np.random.default_rng(11)
        pop = tb.GaussianPopulationPair.isotropic_shift(2, 0.3)
        model = tb.OutcomeModel("nonlinear")
        x = tb.sample_covariates(pop, "source", 400_000, rng)
        w = tb.importance_weights(pop, x)
        y0, y1 = tb.generate_outcomes(model, x, rng)
        vals = w * (y1 - y0)
        se = vals.std() / math.sqrt(vals.size)
        truth = tb.true_target_ate(model, pop)
        assert abs(vals.mean() - truth) <= 4 * se


class TestChangeOfMeasure:
    @pytest.mark.parametrize("g", ["identity", "quadratic"])
    def test_weighted_source_matches_target(self, g):
        rng = np.random.default_rng(12)
        pop = tb.GaussianPopulationPair.isotropic_shift(3, 0.4)
        n = 100_000
        xs = tb.sample_covariates(pop, "source", n, rng)
        xt = tb.sample_covariates(pop, "target", n, rng)
        w = tb.importance_weights(pop, xs)
        if g == "identity":
            src, tgt = w * xs[:, 0], xt[:, 0]
        else:
            src = w * np.einsum("ij,ij->i", xs, xs)
            tgt = np.einsum("ij,ij->i", xt, xt)
        se = math.hypot(src.std() / math.sqrt(n), tgt.std() / math.sqrt(n))
        assert abs(src.mean() - tgt.mean()) <= 4 * se


class TestCovariateCsv:
    def test_round_trip_with_weights(self, tmp_path):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((20, 3))
        w = np.exp(rng.standard_normal(20))
        path = tmp_path / "cov.csv"
        tb.write_covariates_csv(path, x, w)
        x2, w2 = tb.read_covariates_csv(path)
        np.testing.assert_array_equal(x, x2)
        np.testing.assert_array_equal(w, w2)
        assert path.read_text().splitlines()[0] == "x1,x2,x3,w"

    def test_round_trip_without_weights(self, tmp_path):
        x = np.arange(8.0).reshape(4, 2)
        path = tmp_path / "cov.csv"
        tb.write_covariates_csv(path, x)
        x2, w2 = tb.read_covariates_csv(path)
        np.testing.assert_array_equal(x, x2)
        assert w2 is None

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(tb.DataFormatError, match="header"):
            tb.read_covariates_csv(path)

    def test_bad_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2\n1,frog\n")
        with pytest.raises(tb.DataFormatError):
            tb.read_covariates_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(tb.DataFormatError):
            tb.read_covariates_csv(tmp_path / "nope.csv")


class TestValidation:
    def test_population_requires_identity_covariance(self):
        with pytest.raises(ValueError):
            tb.GaussianPopulationPair(np.ones(2), np.ones(2), identity_covariance=False)

    def test_outcome_model_kind(self):
        with pytest.raises(ValueError):
            tb.OutcomeModel("cubic")

    def test_weight_policy_positive(self):
        with pytest.raises(ValueError):
            tb.WeightPolicy(0.0)

    def test_delta_is_derived(self):
        pop = tb.GaussianPopulationPair(np.array([1.0, 2.0]), np.array([1.5, 1.0]))
        np.testing.assert_array_equal(pop.delta, [0.5, -1.0])
