import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mesm.errors import DataValidationError
from mesm.gev import (BlockMaximaConfig, GevParams, block_maxima, fit_gev_mle,
                      from_unit_frechet, gev_cdf, gev_logpdf, gev_loglik, gev_pdf,
                      gev_quantile, to_unit_frechet)

# exp(-(1 + 0.2*2)^(-5)) evaluated at 40 digits with mpmath
CDF_DERIVED = 0.8303280360778086
# 10 + 2*((-log 0.99)^(-0.2) - 1)/0.2, mpmath
QUANTILE_DERIVED = 25.093652817171567


def sample_gev(params: GevParams, n: int, seed: int) -> np.ndarray:
    """Sampling oracle: quantile transform of uniforms."""
    u = np.random.default_rng(seed).uniform(size=n)
    return gev_quantile(params, u)


class TestCdf:
    def test_gumbel_at_location(self):
        assert gev_cdf(GevParams(0.0, 0.0, 1.0), 0.0) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_unit_frechet_at_one(self):
        assert gev_cdf(GevParams(1.0, 1.0, 1.0), 1.0) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_derived_value(self):
        assert gev_cdf(GevParams(0.2, 10.0, 2.0), 14.0) == pytest.approx(CDF_DERIVED, abs=1e-12)

    def test_derived_value_against_density_quadrature(self):
        params = GevParams(0.2, 10.0, 2.0)
        lo = params.support()[0]
        mass, err = integrate.quad(lambda y: gev_pdf(params, y), lo, 14.0, limit=200)
        assert gev_cdf(params, 14.0) == pytest.approx(mass, abs=max(1e-9, 10 * err))

    def test_clamps_outside_support(self):
        heavy = GevParams(0.5, 0.0, 1.0)  # support y > -2
        assert gev_cdf(heavy, -5.0) == 0.0
        bounded = GevParams(-0.5, 0.0, 1.0)  # support y < 2
        assert gev_cdf(bounded, 5.0) == 1.0

    def test_monotone_and_limits(self):
        for xi in (-0.3, 0.0, 0.3):
            params = GevParams(xi, 1.0, 2.0)
            ys = np.linspace(-15, 25, 300)
            cdf = gev_cdf(params, ys)
            assert np.all(np.diff(cdf) >= -1e-14)
            lo, hi = params.support()
            near_lo = lo + 1e-9 if np.isfinite(lo) else -1e9
            near_hi = hi - 1e-9 if np.isfinite(hi) else 1e9
            assert gev_cdf(params, near_lo) < 1e-6
            assert gev_cdf(params, near_hi) > 1 - 1e-6

    def test_invalid_scale_rejected(self):
        with pytest.raises(DataValidationError):
            GevParams(0.0, 0.0, -1.0)
        with pytest.raises(DataValidationError):
            GevParams(0.0, 0.0, 0.0)

    def test_gumbel_limit_continuity(self):
        tiny = GevParams(1e-9, 0.3, 1.7)
        exact = GevParams(0.0, 0.3, 1.7)
        ys = np.linspace(-8, 12, 81)
        assert np.max(np.abs(gev_cdf(tiny, ys) - gev_cdf(exact, ys))) < 1e-7

    def test_max_stability_identity(self):
        # standard Frechet: F(n z)^n == F(z) exactly in algebra
        frechet = GevParams(1.0, 1.0, 1.0)
        z = np.array([0.3, 1.0, 2.5, 40.0])
        for n in (2, 7, 100):
            assert np.allclose(gev_cdf(frechet, n * z) ** n, gev_cdf(frechet, z),
                               rtol=0, atol=1e-14)


class TestDensity:
    @pytest.mark.parametrize("xi", [-0.3, 0.0, 0.3])
    def test_integrates_to_one(self, xi):
        params = GevParams(xi, 0.5, 1.3)
        lo, hi = params.support()
        lo = lo if np.isfinite(lo) else -np.inf
        hi = hi if np.isfinite(hi) else np.inf
        mass, _ = integrate.quad(lambda y: gev_pdf(params, y), lo, hi, limit=400)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_zero_outside_support(self):
        params = GevParams(0.5, 0.0, 1.0)
        assert gev_pdf(params, -3.0) == 0.0
        assert gev_logpdf(params, -3.0) == -np.inf


class TestQuantile:
    def test_unit_frechet_inverse(self):
        assert gev_quantile(GevParams(1.0, 1.0, 1.0), math.exp(-1)) == pytest.approx(1.0, abs=1e-12)

    def test_gumbel_point(self):
        assert gev_quantile(GevParams(0.0, 0.0, 1.0), math.exp(-1)) == pytest.approx(0.0, abs=1e-12)

    def test_derived_quantile(self):
        assert gev_quantile(GevParams(0.2, 10.0, 2.0), 0.99) == pytest.approx(
            QUANTILE_DERIVED, rel=1e-12)

    def test_endpoint_rejected(self):
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(DataValidationError):
                gev_quantile(GevParams(0.0, 0.0, 1.0), p)

    @settings(max_examples=200, deadline=None)
    @given(xi=st.floats(-0.9, 0.9), mu=st.floats(-50, 50), sigma=st.floats(0.01, 50),
           p=st.floats(1e-6, 1 - 1e-6))
    def test_cdf_quantile_inverse(self, xi, mu, sigma, p):
        params = GevParams(xi, mu, sigma)
        assert gev_cdf(params, gev_quantile(params, p)) == pytest.approx(p, rel=1e-10, abs=1e-10)


class TestBlockMaxima:
    def test_basic(self):
        out = block_maxima([1, 5, 2, 4, 3, 6], BlockMaximaConfig(2))
        assert out.tolist() == [5, 4, 6]

    def test_short_final_block(self):
        out = block_maxima([1, 2, 3, 4, 5], BlockMaximaConfig(2))
        assert out.tolist() == [2, 4, 5]

    def test_block_size_one_is_identity(self):
        data = [3.0, -1.0, 2.5]
        assert block_maxima(data, BlockMaximaConfig(1)).tolist() == data

    def test_block_count_formula(self):
        cfg = BlockMaximaConfig(7)
        assert cfg.n_blocks(21) == 3
        assert cfg.n_blocks(22) == 4
        assert block_maxima(np.arange(22.0), cfg).size == 4

    def test_empty_rejected(self):
        with pytest.raises(DataValidationError):
            block_maxima([], BlockMaximaConfig(2))

    def test_bad_block_size(self):
        with pytest.raises(DataValidationError):
            BlockMaximaConfig(0)


class TestFrechetTransform:
    def test_known_values(self):
        params = GevParams(0.5, 0.0, 1.0)
        assert to_unit_frechet(params, 0.0) == pytest.approx(1.0, abs=1e-14)
        assert to_unit_frechet(params, 2.0) == pytest.approx(4.0, rel=1e-14)

    def test_probability_preserved(self):
        frechet = GevParams(1.0, 1.0, 1.0)
        for params in (GevParams(0.3, 5, 2), GevParams(0.0, -1, 0.5), GevParams(-0.2, 0, 3)):
            ys = gev_quantile(params, np.linspace(0.05, 0.95, 19))
            z = to_unit_frechet(params, ys)
            assert np.allclose(gev_cdf(frechet, z), gev_cdf(params, ys), atol=1e-10)

    @pytest.mark.parametrize("params", [GevParams(0.3, 5, 2), GevParams(0.0, -1, 0.5),
                                        GevParams(-0.2, 0, 3)])
    def test_round_trip(self, params):
        ys = sample_gev(params, 200, seed=42)
        back = from_unit_frechet(params, to_unit_frechet(params, ys))
        assert np.allclose(back, ys, rtol=1e-10, atol=1e-10)

    def test_outside_support_rejected(self):
        with pytest.raises(DataValidationError):
            to_unit_frechet(GevParams(0.5, 0.0, 1.0), -3.0)

    def test_nonpositive_rejected(self):
        with pytest.raises(DataValidationError):
            from_unit_frechet(GevParams(0.0, 0.0, 1.0), 0.0)

    def test_transformed_samples_standard_frechet(self):
        # suite check: transformed draws pass a KS test against exp(-1/z)
        params = GevParams(0.2, 10.0, 2.0)
        z = to_unit_frechet(params, sample_gev(params, 10_000, seed=7))
        result = stats.kstest(z, lambda v: np.exp(-1.0 / v))
        assert result.pvalue > 0.01


class TestMleFit:
    def test_recovery_heavy_tail(self):
        truth = GevParams(0.2, 10.0, 2.0)
        fitted, loglik = fit_gev_mle(sample_gev(truth, 5000, seed=11))
        assert abs(fitted.shape - truth.shape) < 0.08
        assert abs(fitted.loc - truth.loc) < 0.15
        assert abs(fitted.scale - truth.scale) < 0.15
        assert loglik == pytest.approx(gev_loglik(fitted, sample_gev(truth, 5000, seed=11)),
                                       abs=1e-8)

    def test_recovery_gumbel(self):
        fitted, _ = fit_gev_mle(sample_gev(GevParams(0.0, 0.0, 1.0), 5000, seed=13))
        assert abs(fitted.shape) < 0.05

    def test_all_samples_in_fitted_support(self):
        samples = sample_gev(GevParams(-0.3, 4.0, 1.5), 300, seed=3)
        fitted, _ = fit_gev_mle(samples)
        assert np.all(fitted.contains(samples))

    def test_consistency_with_sample_size(self):
        truth = GevParams(0.2, 10.0, 2.0)
        errors = {}
        for n in (500, 5000):
            errs = []
            for seed in range(5):
                fitted, _ = fit_gev_mle(sample_gev(truth, n, seed=100 + seed))
                errs.append(abs(fitted.shape - truth.shape)
                            + abs(fitted.loc - truth.loc)
                            + abs(fitted.scale - truth.scale))
            errors[n] = np.mean(errs)
        assert errors[5000] < errors[500]

    def test_constant_samples_rejected(self):
        with pytest.raises(DataValidationError, match="degenerate"):
            fit_gev_mle(np.full(50, 3.0))

    def test_too_few_samples_rejected(self):
        with pytest.raises(DataValidationError):
            fit_gev_mle(np.arange(19.0))

    def test_nonfinite_rejected(self):
        bad = np.arange(30.0)
        bad[4] = np.nan
        with pytest.raises(DataValidationError):
            fit_gev_mle(bad)
