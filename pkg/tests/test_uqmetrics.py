"""Interval/coverage, NLL, CRPS against independent oracles; harness behavior."""

import json

import numpy as np
import pytest

from mvuq import uqmetrics
from mvuq.distributions import PredictiveDistribution
from mvuq.errors import LengthMismatch, TooFewSamples

from oracles import crps_gaussian_quadrature, norm_ppf_bisect


def gauss(mu, var):
    return PredictiveDistribution.gaussian(mu, var)


class TestInterval:
    def test_standard_normal_95(self):
        lo, hi = uqmetrics.interval(gauss(0.0, 1.0), 0.95)
        z = norm_ppf_bisect(0.975)
        assert lo == pytest.approx(-z, abs=1e-9)
        assert hi == pytest.approx(z, abs=1e-9)
        assert hi - lo == pytest.approx(3.919927969, abs=1e-6)

    def test_collapses_with_variance(self):
        lo, hi = uqmetrics.interval(gauss(3.0, 1e-18), 0.95)
        assert lo == pytest.approx(3.0, abs=1e-6)
        assert hi == pytest.approx(3.0, abs=1e-6)

    def test_sample_quantiles_match_order_statistics(self):
        samples = np.linspace(0.0, 1.0, 10001)
        dist = PredictiveDistribution.from_samples(samples)
        lo, hi = uqmetrics.interval(dist, 0.90)
        grid_step = 1.0 / 10000.0
        assert abs(lo - 0.05) <= grid_step
        assert abs(hi - 0.95) <= grid_step

    def test_too_few_samples(self):
        dist = PredictiveDistribution.from_samples(np.arange(10.0))
        with pytest.raises(TooFewSamples):
            uqmetrics.interval(dist, 0.9)

    def test_monotone_in_alpha(self):
        dist = gauss(1.0, 4.0)
        widths = []
        for alpha in (0.5, 0.8, 0.9, 0.95, 0.99):
            lo, hi = uqmetrics.interval(dist, alpha)
            widths.append(hi - lo)
        assert all(widths[i] < widths[i + 1] for i in range(len(widths) - 1))


class TestCoverage:
    def test_all_at_mean_full_coverage(self):
        dists = [gauss(i, 1.0) for i in range(10)]
        rep = uqmetrics.coverage_and_length(dists, np.arange(10.0), 0.5)
        assert rep.coverage == 1.0

    def test_boundary_counts_as_covered(self):
        (lo, hi) = uqmetrics.interval(gauss(0.0, 1.0), 0.95)
        rep = uqmetrics.coverage_and_length([gauss(0.0, 1.0)], [hi], 0.95)
        assert rep.coverage == 1.0

    def test_calibrated_gaussians_binomial_band(self):
        rng = np.random.default_rng(0)
        n = 2000
        mus = rng.uniform(-2, 2, n)
        sds = rng.uniform(0.5, 2.0, n)
        y = mus + sds * rng.standard_normal(n)
        dists = [gauss(m, s**2) for m, s in zip(mus, sds)]
        rep95 = uqmetrics.coverage_and_length(dists, y, 0.95)
        assert 0.93 <= rep95.coverage <= 0.97
        rep50 = uqmetrics.coverage_and_length(dists, y, 0.5)
        assert 0.47 <= rep50.coverage <= 0.53

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            uqmetrics.coverage_and_length([gauss(0, 1)], [1.0, 2.0], 0.9)


class TestNll:
    def test_gaussian_values(self):
        assert uqmetrics.eval_nll([gauss(1.0, 1.0)], [1.0]) == 0.0
        assert uqmetrics.eval_nll([gauss(1.0, 1.0)], [0.0]) == 0.5
        assert uqmetrics.eval_nll([gauss(0.0, np.e)], [0.0]) == pytest.approx(0.5)

    def test_can_go_negative_without_constant(self):
        # tight correct predictions: log(var)/2 dominates below zero
        assert uqmetrics.eval_nll([gauss(0.0, 0.01)], [0.0]) < 0

    def test_sample_moment_matching_close_to_smooth_oracle(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(2.0, 1.5, 200_000)
        dist = PredictiveDistribution.from_samples(samples)
        y = [2.5]
        nll_samp = uqmetrics.eval_nll([dist], y)
        nll_true = uqmetrics.eval_nll([gauss(2.0, 1.5**2)], y)
        assert abs(nll_samp - nll_true) < 0.05

    def test_minimized_at_mean_squared_residual(self):
        resid = np.array([0.5, -1.0, 0.25, 2.0])
        msr = float(np.mean(resid**2))
        best = uqmetrics.eval_nll([gauss(0.0, msr)] * 4, resid)
        for var in (msr * 0.5, msr * 0.9, msr * 1.1, msr * 2.0):
            assert uqmetrics.eval_nll([gauss(0.0, var)] * 4, resid) >= best


class TestCrps:
    def test_standard_normal_at_zero(self):
        val = uqmetrics.crps_gaussian(0.0, 1.0, 0.0)
        assert val == pytest.approx(0.2336949767, abs=1e-9)
        assert val == pytest.approx(crps_gaussian_quadrature(0.0, 1.0, 0.0), abs=1e-8)

    def test_far_observation(self):
        val = uqmetrics.crps_gaussian(0.0, 1.0, 10.0)
        assert val == pytest.approx(crps_gaussian_quadrature(0.0, 1.0, 10.0), abs=1e-6)
        assert val == pytest.approx(10.0 - 1.0 / np.sqrt(np.pi), abs=1e-6)

    def test_point_mass_at_observation_is_zero(self):
        assert uqmetrics.crps_gaussian(1.5, 0.0, 1.5) == 0.0
        assert uqmetrics.crps(gauss(1.5, 1e-30), 1.5) == pytest.approx(0.0, abs=1e-14)

    def test_grid_against_quadrature(self):
        for mu in (-2.0, 0.0, 2.0):
            for sigma in (0.1, 1.0, 5.0):
                for y in range(-3, 4):
                    closed = uqmetrics.crps_gaussian(mu, sigma, float(y))
                    quad_val = crps_gaussian_quadrature(mu, sigma, float(y))
                    assert abs(closed - quad_val) < 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            mu, sigma, y = rng.normal(), rng.uniform(0.01, 3), rng.normal()
            assert uqmetrics.crps_gaussian(mu, sigma, y) >= 0.0

    def test_sample_energy_form_small_case(self):
        # hand-enumerated: x = [0, 1], y = 0.5
        # mean|x-y| = 0.5; mean|X-X'| over ordered pairs = (0+1+1+0)/4 = 0.5
        dist = PredictiveDistribution.from_samples(np.array([0.0, 1.0]))
        assert uqmetrics.crps(dist, 0.5) == pytest.approx(0.5 - 0.25)

    def test_sample_converges_to_closed_form(self):
        rng = np.random.default_rng(3)
        closed = uqmetrics.crps_gaussian(0.0, 1.0, 0.7)
        errors = []
        for m in (10**3, 10**4, 10**5):
            vals = [uqmetrics.crps_samples(rng.standard_normal(m), 0.7)
                    for _ in range(3)]
            errors.append(np.mean(np.abs(np.array(vals) - closed)))
        assert errors[2] < 1e-2
        # error should shrink roughly like 1/sqrt(m): two decades -> ~10x
        assert errors[2] < errors[0] / 3.0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            uqmetrics.crps_samples(np.array([1.0]), 0.0)


class TestHarness:
    def _feature_sets(self, rng, n=60):
        from mvuq.featurize import FeatureMatrix
        ids = tuple(str(i) for i in range(n))
        a = rng.standard_normal((n, 3))
        b = rng.standard_normal((n, 3))
        fa = FeatureMatrix(a, "imported", "va", ids)
        fb = FeatureMatrix(b, "imported", "vb", ids)
        return fa, fb

    def test_mean_baseline_mae_matches_laplace_expectation(self):
        rng = np.random.default_rng(4)
        n = 40_000
        from mvuq.featurize import FeatureMatrix
        ids = tuple(str(i) for i in range(n))
        fm = FeatureMatrix(rng.standard_normal((n, 1)), "imported", "x", ids)
        y = rng.laplace(0.0, 1.0, n)
        cfg = uqmetrics.HarnessConfig(feature_sets={"x": fm}, targets=y,
                                      models=("mean",), folds=5, seed=0)
        report = uqmetrics.evaluate_pipeline(cfg)
        # E|y - median| = b = 1 for Laplace(0, b); the mean predictor of a
        # symmetric law coincides with the median as n grows
        assert report["rows"]["x/mean"]["mae_mean"] == pytest.approx(1.0, abs=0.02)

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(5)
        fa, fb = self._feature_sets(rng)
        y = rng.standard_normal(60)
        cfg = uqmetrics.HarnessConfig(feature_sets={"va": fa, "vb": fb}, targets=y,
                                      models=("mean", "ridge_cv"), folds=5, seed=3)
        r1 = json.dumps(uqmetrics.evaluate_pipeline(cfg), sort_keys=True)
        r2 = json.dumps(uqmetrics.evaluate_pipeline(cfg), sort_keys=True)
        assert r1 == r2

    def test_probabilistic_rows_have_uncertainty_columns(self):
        rng = np.random.default_rng(6)
        fa, _ = self._feature_sets(rng)
        y = fa.values @ np.array([1.0, 0.5, -0.5]) + 0.3 * rng.standard_normal(60)
        cfg = uqmetrics.HarnessConfig(feature_sets={"va": fa}, targets=y,
                                      models=("ridge_cv", "blr_conjugate"),
                                      folds=5, seed=1)
        report = uqmetrics.evaluate_pipeline(cfg)
        blr_row = report["rows"]["va/blr_conjugate"]
        for col in ("interval_length", "coverage", "nll", "crps"):
            assert col in blr_row
        assert "coverage" not in report["rows"]["va/ridge_cv"]
        csv_text = uqmetrics.report_csv(report)
        assert "va/blr_conjugate" in csv_text
        assert report["nll_convention"] == uqmetrics.NLL_CONVENTION

    def test_shared_folds_across_methods(self):
        # fused beats single views on a planted two-block signal because the
        # folds are shared; just verify the structural determinism here
        rng = np.random.default_rng(7)
        fa, fb = self._feature_sets(rng)
        y = rng.standard_normal(60)
        cfg = uqmetrics.HarnessConfig(feature_sets={"va": fa, "vb": fb}, targets=y,
                                      models=("mean",), folds=4, seed=9)
        report = uqmetrics.evaluate_pipeline(cfg)
        assert report["rows"]["va/mean"]["fold_mae"] == report["rows"]["vb/mean"]["fold_mae"]
