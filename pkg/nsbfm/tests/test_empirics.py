"""Tests for jump detection, unit-root diagnostics and the pricing comparison."""

import math

import numpy as np
import pytest

from nsbfm.empirics import (
    IntradayDay,
    _minrv_statistics,
    adf_pvalue,
    adf_table,
    build_jump_panel,
    canonical_correlations,
    default_adf_lags,
    detect_jumps,
    detect_jumps_batch,
    explained_variation,
    grs_test,
    ols_r2,
    price,
    r2_increment_summary,
)
from nsbfm.validation import ConfigError, DataValidationError


def brownian_days(rng, n_days, m=390, daily_var=1e-4):
    return rng.normal(0.0, math.sqrt(daily_var / m), size=(n_days, m))


class TestDetectJumps:
    """Tests for the MinRV ratio test."""

    def test_constant_returns(self):
        """Test MinRV/RV = pi/(pi-2) for constant returns and no jump."""
        day = IntradayDay(returns=np.full(50, 0.002), asset="A", date="2020-01-02")
        result = detect_jumps(day)
        assert result.indicator == 0
        assert result.statistic < 0
        expected = 1.0 - math.pi / (math.pi - 2.0)
        scale = math.sqrt(1.81 / 50 * max(1.0, _minrq_ratio(np.full(50, 0.002))))
        assert result.statistic == pytest.approx(expected / scale)
        assert result.realized_vol == pytest.approx(math.sqrt(50) * 0.002)

    def test_zero_returns_flag_no_activity(self):
        """Test that a day without price changes is flagged and not a jump."""
        result = detect_jumps(IntradayDay(returns=np.zeros(10)))
        assert result.no_activity
        assert result.indicator == 0
        assert math.isnan(result.statistic)

    def test_single_large_return_is_a_jump(self, rng):
        """Test that one return far above the diffusive scale is detected."""
        returns = brownian_days(rng, 1)[0]
        returns[200] = 0.05
        assert detect_jumps(IntradayDay(returns=returns)).indicator == 1

    def test_batch_matches_single_days(self, rng):
        """Test that the vectorised test agrees with the per-day one."""
        days = brownian_days(rng, 5, m=78)
        days[2, 40] = 0.03
        batch = detect_jumps_batch(days, level=0.99)
        for j in range(5):
            single = detect_jumps(IntradayDay(returns=days[j]), level=0.99)
            assert batch.loc[j, "indicator"] == single.indicator
            assert batch.loc[j, "statistic"] == pytest.approx(single.statistic)
        assert batch.loc[2, "indicator"] == 1

    def test_indicator_matches_critical_value(self, rng):
        """Test that indicators are exactly the statistics above the normal quantile."""
        batch = detect_jumps_batch(brownian_days(rng, 200, m=100), level=0.9)
        critical = 1.2815515655446004
        np.testing.assert_array_equal(
            batch["indicator"].to_numpy(), (batch["statistic"] > critical).astype(int)
        )

    @pytest.mark.parametrize("level", [0.5, 1.0, 0.2])
    def test_level_range(self, level):
        """Test that the level must lie in (0.5, 1)."""
        with pytest.raises(ConfigError):
            detect_jumps(IntradayDay(returns=np.ones(5)), level=level)

    def test_too_few_returns(self):
        """Test that fewer than three intraday returns are rejected."""
        with pytest.raises(DataValidationError):
            IntradayDay(returns=np.array([0.01, -0.01]))

    def test_non_finite_returns(self):
        """Test that NaN returns are rejected."""
        with pytest.raises(DataValidationError):
            IntradayDay(returns=np.array([0.01, np.nan, 0.02]))

    @pytest.mark.slow
    def test_size_on_brownian_days(self):
        """Test a rejection rate near 5% on jump-free days."""
        rng = np.random.default_rng(2024)
        batch = detect_jumps_batch(brownian_days(rng, 10_000), level=0.95)
        assert 0.03 <= batch["indicator"].mean() <= 0.07

    @pytest.mark.slow
    def test_minrv_is_consistent(self):
        """Test that MinRV averages to the daily variance on Brownian days."""
        rng = np.random.default_rng(7)
        days = brownian_days(rng, 10_000, daily_var=4e-4)
        rv, minrv, _, no_activity = _minrv_statistics(days)
        assert not no_activity.any()
        assert 0.97 * 4e-4 <= minrv.mean() <= 1.03 * 4e-4
        assert 0.97 * 4e-4 <= rv.mean() <= 1.03 * 4e-4


def _minrq_ratio(returns):
    m = returns.size
    pair_min = np.minimum(np.abs(returns[:-1]), np.abs(returns[1:]))
    minrv = math.pi / (math.pi - 2) * m / (m - 1) * np.sum(pair_min**2)
    minrq = math.pi * m / (3 * math.pi - 8) * m / (m - 1) * np.sum(pair_min**4)
    return minrq / minrv**2


class TestBuildJumpPanel:
    """Tests for assembling the asset x day panel."""

    def _days(self, rng, asset, dates):
        return [
            IntradayDay(returns=brownian_days(rng, 1, m=60)[0], asset=asset, date=d)
            for d in dates
        ]

    def test_common_dates_only(self, rng):
        """Test that dates missing for one asset are dropped and the rest sorted."""
        days = {
            "AAA": self._days(rng, "AAA", ["2020-01-03", "2020-01-02", "2020-01-06"]),
            "BBB": self._days(rng, "BBB", ["2020-01-02", "2020-01-03"]),
        }
        panel = build_jump_panel(days, threads=2)
        assert panel.assets == ("AAA", "BBB")
        assert panel.dates == ("2020-01-02", "2020-01-03")
        assert panel.indicators.shape == (2, 2)

    def test_to_panel_with_standardized_volatility(self, rng):
        """Test that the covariate is sqrt(RV) standardized per asset."""
        dates = [f"2020-02-{d:02d}" for d in range(1, 11)]
        days = {a: self._days(rng, a, dates) for a in ("X", "Y", "Z")}
        jump_panel = build_jump_panel(days)
        panel = jump_panel.to_panel()
        assert panel.x.shape == (3, 10, 1)
        np.testing.assert_allclose(panel.x[:, :, 0].mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(panel.x[:, :, 0].std(axis=1), 1.0)
        assert jump_panel.to_panel(with_volatility=False).n_covariates == 0

    def test_no_common_dates(self, rng):
        """Test that disjoint calendars are rejected."""
        days = {
            "AAA": self._days(rng, "AAA", ["2020-01-02"]),
            "BBB": self._days(rng, "BBB", ["2020-01-03"]),
        }
        with pytest.raises(DataValidationError, match="common dates"):
            build_jump_panel(days)

    def test_no_assets(self):
        """Test that an empty mapping is rejected."""
        with pytest.raises(DataValidationError):
            build_jump_panel({})


class TestAdf:
    """Tests for the unit-root diagnostics."""

    def test_default_lags(self):
        """Test floor(12 (T/100)^(1/4))."""
        assert default_adf_lags(100) == 12
        assert default_adf_lags(252) == 15

    def test_white_noise_hits_floor(self, rng):
        """Test that strongly mean-reverting noise gives the clamped floor."""
        assert adf_pvalue(rng.normal(0, 10, size=252), n_lags=0) == 0.001

    def test_random_walk_is_not_rejected(self, rng):
        """Test that a random walk keeps a large p-value."""
        walk = np.cumsum(rng.normal(size=500))
        assert adf_pvalue(walk, n_lags=0) > 0.01

    def test_constant_series(self):
        """Test that a constant series is rejected."""
        with pytest.raises(DataValidationError, match="constant"):
            adf_pvalue(np.ones(100), n_lags=1)

    def test_too_short(self):
        """Test that T <= p + 10 is rejected."""
        with pytest.raises(DataValidationError, match="too short"):
            adf_pvalue(np.arange(12.0), n_lags=2)

    def test_negative_lags(self):
        """Test that a negative lag count is a configuration error."""
        with pytest.raises(ConfigError):
            adf_pvalue(np.arange(50.0), n_lags=-1)

    def test_table_layout(self, rng):
        """Test one row per factor with level and difference p-values."""
        factors = np.cumsum(rng.normal(size=(200, 2)), axis=0)
        table = adf_table(factors, n_lags=1)
        assert list(table.columns) == ["factor", "level", "difference"]
        assert table["factor"].tolist() == [1, 2]
        assert np.all(table["difference"] == 0.001)
        assert np.all((table["level"] >= 0.001) & (table["level"] <= 0.999))

    @pytest.mark.slow
    def test_size_oracles(self):
        """Test the random-walk and white-noise rejection frequencies."""
        rng = np.random.default_rng(11)
        walks = [adf_pvalue(np.cumsum(rng.normal(size=252)), n_lags=0) for _ in range(300)]
        noise = [adf_pvalue(rng.normal(size=252), n_lags=0) for _ in range(300)]
        assert np.mean(np.asarray(walks) > 0.05) >= 0.9
        assert np.mean(np.asarray(noise) == 0.001) >= 0.99


class TestPricing:
    """Tests for R^2, GRS, canonical correlations and explained variation."""

    def _factors(self, rng, t=120, k=5):
        return rng.normal(0.5, 1.0, size=(t, k))

    def test_exact_factor_returns(self, rng):
        """Test R^2 = 1, zero increment and GRS = 0 for noise-free zero-alpha returns."""
        ff5 = self._factors(rng)
        betas = rng.normal(size=(8, 5))
        returns = betas @ ff5.T
        jump = rng.normal(size=(120, 2))
        report = price(returns, ff5, jump)
        np.testing.assert_allclose(report.r2_base, 1.0)
        np.testing.assert_allclose(report.r2_increment, 0.0, atol=1e-12)
        assert report.grs_base.statistic == 0.0
        assert report.grs_base.pvalue == 1.0

    def test_extra_factor_helps(self, rng):
        """Test that a priced extra factor raises R^2 and lowers GRS."""
        ff5 = self._factors(rng, t=240)
        extra = rng.normal(0.8, 1.0, size=(240, 1))
        loadings = rng.normal(1.0, 0.3, size=(10, 1))
        returns = (
            rng.normal(size=(10, 5)) @ ff5.T + loadings @ extra.T + rng.normal(0, 0.5, (10, 240))
        )
        report = price(returns, ff5, extra)
        assert report.r2_increment.mean() > 0
        assert report.grs_augmented.statistic < report.grs_base.statistic
        assert np.all((report.r2_base >= 0) & (report.r2_base <= 1))

    def test_grs_skipped_when_too_few_periods(self, rng):
        """Test that T <= N + K skips GRS but still reports R^2."""
        ff5 = self._factors(rng, t=20)
        returns = rng.normal(size=(18, 20))
        report = price(returns, ff5, rng.normal(size=(20, 1)))
        assert report.grs_base.skipped
        assert math.isnan(report.grs_base.statistic)
        assert "T=20" in report.grs_base.reason
        assert report.r2_base.shape == (18,)

    def test_grs_matches_formula(self, rng):
        """Test the statistic against a direct computation."""
        t, n, k = 150, 6, 2
        factors = rng.normal(0.3, 1.0, size=(t, k))
        returns = 0.2 + rng.normal(size=(n, k)) @ factors.T + rng.normal(size=(n, t))
        result = grs_test(returns, factors)

        design = np.column_stack([np.ones(t), factors])
        coef, *_ = np.linalg.lstsq(design, returns.T, rcond=None)
        resid = returns.T - design @ coef
        sigma = resid.T @ resid / (t - k - 1)
        mu = factors.mean(axis=0)
        omega = (factors - mu).T @ (factors - mu) / t
        alpha = coef[0]
        expected = (
            t / n * (t - n - k) / (t - k - 1)
            * (alpha @ np.linalg.solve(sigma, alpha))
            / (1 + mu @ np.linalg.solve(omega, mu))
        )
        assert result.statistic == pytest.approx(expected, rel=1e-8)
        assert 0.0 <= result.pvalue <= 1.0
        assert result.n_factors == 2

    def test_canonical_correlations_identical_columns(self, rng):
        """Test that shared columns give canonical correlations of one."""
        ff5 = self._factors(rng)
        corr = canonical_correlations(ff5[:, :3], ff5)
        np.testing.assert_allclose(corr, [1.0, 1.0, 1.0], atol=1e-10)

    def test_canonical_correlations_permutation_invariant(self, rng):
        """Test sorting, range and invariance to column order."""
        a = rng.normal(size=(100, 3))
        b = rng.normal(size=(100, 4)) + 0.5 * a[:, [0, 1, 2, 0]]
        corr = canonical_correlations(a, b)
        assert np.all(np.diff(corr) <= 0)
        assert np.all((corr >= 0) & (corr <= 1))
        np.testing.assert_allclose(canonical_correlations(a[:, ::-1], b[:, [3, 1, 0, 2]]), corr)

    def test_canonical_row_mismatch(self, rng):
        """Test that inputs with different row counts are rejected."""
        with pytest.raises(DataValidationError):
            canonical_correlations(rng.normal(size=(10, 2)), rng.normal(size=(9, 2)))

    def test_explained_variation_perfect_span(self, rng):
        """Test a series of ones when returns are exact factor combinations."""
        factors = self._factors(rng, t=60, k=2)
        returns = rng.normal(size=(12, 2)) @ factors.T
        series = explained_variation(returns, factors, window=20)
        assert len(series) == 60 - 20 + 1
        np.testing.assert_allclose(series["explained"], 1.0)
        assert (series.loc[0, "start"], series.loc[0, "stop"]) == (0, 20)

    def test_explained_variation_full_window(self, rng):
        """Test that window = T gives one value."""
        factors = self._factors(rng, t=40, k=2)
        returns = rng.normal(size=(10, 40))
        series = explained_variation(returns, factors, window=40)
        assert len(series) == 1
        assert 0.0 <= series.loc[0, "explained"] <= 1.0

    def test_explained_variation_null(self, rng):
        """Test small explained shares when returns ignore the factors."""
        factors = self._factors(rng, t=300, k=5)
        returns = rng.normal(size=(50, 300))
        series = explained_variation(returns, factors, window=252)
        assert np.mean(series["explained"] < 0.2) >= 0.95

    @pytest.mark.parametrize("window", [3, 61])
    def test_explained_variation_bad_window(self, rng, window):
        """Test that windows shorter than K + 2 or longer than T are rejected."""
        factors = self._factors(rng, t=60, k=2)
        with pytest.raises(ConfigError):
            explained_variation(rng.normal(size=(5, 60)), factors, window=window)

    def test_price_with_window_and_summary(self, rng):
        """Test the explained-variation columns and the increment summary."""
        ff5 = self._factors(rng, t=80)
        returns = rng.normal(size=(6, 80))
        report = price(returns, ff5, rng.normal(size=(80, 1)), window=40)
        assert list(report.explained_variation.columns) == ["start", "stop", "base", "augmented"]
        summary = r2_increment_summary(report)
        assert set(summary) == {"mean", "p5", "p10", "median", "p90", "p95"}
        assert summary["p5"] <= summary["median"] <= summary["p95"]
        assert np.all(report.r2_increment >= -1e-12)
        assert list(report.grs_frame()["model"]) == ["base", "augmented"]

    def test_ols_r2_shape_mismatch(self, rng):
        """Test that return and factor periods must match."""
        with pytest.raises(DataValidationError):
            ols_r2(rng.normal(size=(3, 10)), rng.normal(size=(9, 2)))
