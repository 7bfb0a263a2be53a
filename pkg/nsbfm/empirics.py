"""Empirical pipeline: intraday jump detection, factor unit-root diagnostics, asset pricing.

Jump detection uses the MinRV ratio test on one day of intraday log-returns r_1..r_M:

    RV    = sum r_j^2
    MinRV = pi/(pi-2) * M/(M-1) * sum_j min(|r_j|, |r_j+1|)^2
    MinRQ = pi*M/(3*pi-8) * M/(M-1) * sum_j min(|r_j|, |r_j+1|)^4
    z     = (1 - MinRV/RV) / sqrt(theta/M * max(1, MinRQ/MinRV^2)),  theta = 1.81

and flags a jump when z exceeds the standard-normal quantile at the test level. The
daily binary jump indicators form the outcome panel of the factor model; the realized
volatility sqrt(RV), standardized per asset, is its covariate.

Pricing compares the five-factor model with the same model augmented by the estimated
jump factors: per-asset R^2, GRS tests, canonical correlations between the factor sets and
rolling-window explained variation.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.tsa.stattools import adfuller

from nsbfm.config import (
    ADF_PVALUE_CEILING,
    ADF_PVALUE_FLOOR,
    DEFAULT_JUMP_LEVEL,
    MINRV_THETA,
    resolve_threads,
)
from nsbfm.logging_config import get_logger, log_event
from nsbfm.models import Panel
from nsbfm.validation import (
    ConfigError,
    DataValidationError,
    validate_finite,
    validate_level,
)

__all__ = [
    "IntradayDay",
    "JumpResult",
    "JumpPanel",
    "GrsResult",
    "PricingReport",
    "detect_jumps",
    "detect_jumps_batch",
    "build_jump_panel",
    "default_adf_lags",
    "adf_pvalue",
    "adf_table",
    "ols_r2",
    "grs_test",
    "canonical_correlations",
    "explained_variation",
    "price",
    "r2_increment_summary",
]

logger = get_logger("empirics")

MIN_INTRADAY_RETURNS = 3


# =============================================================================
# Jump detection
# =============================================================================


@dataclass(frozen=True)
class IntradayDay:
    """Intraday log-returns of one asset on one day."""

    returns: np.ndarray
    asset: str = ""
    date: str = ""

    def __post_init__(self) -> None:
        returns = validate_finite(np.ravel(self.returns), f"returns of {self.asset} {self.date}")
        if returns.size < MIN_INTRADAY_RETURNS:
            raise DataValidationError(
                f"{self.asset} {self.date}: need at least {MIN_INTRADAY_RETURNS} intraday "
                f"returns, got {returns.size}"
            )
        object.__setattr__(self, "returns", returns)


@dataclass(frozen=True)
class JumpResult:
    """Test outcome for one asset-day. statistic is NaN when no_activity is set."""

    indicator: int
    statistic: float
    realized_vol: float
    no_activity: bool = False


def _minrv_statistics(returns: np.ndarray) -> Tuple[np.ndarray, ...]:
    """RV, MinRV, MinRQ and the ratio statistic for each row of a days x M matrix."""
    m = returns.shape[1]
    rv = np.sum(returns**2, axis=1)
    pair_min = np.minimum(np.abs(returns[:, :-1]), np.abs(returns[:, 1:]))
    correction = m / (m - 1.0)
    minrv = math.pi / (math.pi - 2.0) * correction * np.sum(pair_min**2, axis=1)
    minrq = math.pi * m / (3.0 * math.pi - 8.0) * correction * np.sum(pair_min**4, axis=1)

    no_activity = (rv <= 0.0) | (minrv <= 0.0)
    safe_rv = np.where(no_activity, 1.0, rv)
    safe_minrv = np.where(no_activity, 1.0, minrv)
    scale = np.sqrt(MINRV_THETA / m * np.maximum(1.0, minrq / safe_minrv**2))
    statistic = np.where(no_activity, np.nan, (1.0 - safe_minrv / safe_rv) / scale)
    return rv, minrv, statistic, no_activity


def detect_jumps_batch(
    returns: np.ndarray, level: float = DEFAULT_JUMP_LEVEL
) -> pd.DataFrame:
    """Jump test for many days with the same number of intraday returns.

    Args:
        returns: days x M matrix of intraday log-returns, M >= 3
        level: One-sided test level in (0.5, 1)

    Returns:
        DataFrame with columns indicator, statistic, realized_vol, no_activity (one row per day)
    """
    level = validate_level(level, low=0.5)
    returns = validate_finite(np.atleast_2d(returns), "intraday returns")
    if returns.ndim != 2 or returns.shape[1] < MIN_INTRADAY_RETURNS:
        raise DataValidationError(
            f"need a days x M matrix with M >= {MIN_INTRADAY_RETURNS}, got shape {returns.shape}"
        )
    rv, _, statistic, no_activity = _minrv_statistics(returns)
    critical = stats.norm.ppf(level)
    indicator = np.where(no_activity, 0, statistic > critical).astype(np.int8)
    return pd.DataFrame(
        {
            "indicator": indicator,
            "statistic": statistic,
            "realized_vol": np.sqrt(rv),
            "no_activity": no_activity,
        }
    )


def detect_jumps(day: IntradayDay, level: float = DEFAULT_JUMP_LEVEL) -> JumpResult:
    """MinRV jump test for a single asset-day."""
    row = detect_jumps_batch(day.returns[None, :], level).iloc[0]
    return JumpResult(
        indicator=int(row["indicator"]),
        statistic=float(row["statistic"]),
        realized_vol=float(row["realized_vol"]),
        no_activity=bool(row["no_activity"]),
    )


@dataclass(frozen=True)
class JumpPanel:
    """N x T jump indicators, test statistics and realized volatility, with labels."""

    indicators: np.ndarray
    stats: np.ndarray
    volatility: np.ndarray
    assets: Tuple[str, ...] = field(default_factory=tuple)
    dates: Tuple[str, ...] = field(default_factory=tuple)

    def standardized_volatility(self) -> np.ndarray:
        """sqrt(RV) standardized per asset; an asset with constant volatility gets zeros."""
        mean = self.volatility.mean(axis=1, keepdims=True)
        sd = self.volatility.std(axis=1, keepdims=True)
        return np.where(sd > 0, (self.volatility - mean) / np.where(sd > 0, sd, 1.0), 0.0)

    def to_panel(self, with_volatility: bool = True) -> Panel:
        """Binary panel for estimation, with the standardized volatility as the covariate."""
        x = self.standardized_volatility()[:, :, None] if with_volatility else None
        return Panel(y=self.indicators, x=x)

    def jump_rate(self) -> float:
        return float(self.indicators.mean())


def _test_asset(
    asset: str, days: Sequence[IntradayDay], dates: Sequence[str], level: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    by_date = {day.date: day for day in days}
    results = [detect_jumps(by_date[d], level) for d in dates]
    no_activity = sum(r.no_activity for r in results)
    return (
        np.array([r.indicator for r in results], dtype=np.int8),
        np.array([r.statistic for r in results]),
        np.array([r.realized_vol for r in results]),
        no_activity,
    )


def build_jump_panel(
    days_by_asset: Mapping[str, Sequence[IntradayDay]],
    level: float = DEFAULT_JUMP_LEVEL,
    threads: Optional[int] = None,
) -> JumpPanel:
    """Run the jump test for every asset-day and assemble the N x T panel.

    Only dates observed for every asset are kept; assets are ordered as given and dates
    sorted.

    Raises:
        DataValidationError: If there are no assets or no common dates.
    """
    level = validate_level(level, low=0.5)
    if not days_by_asset:
        raise DataValidationError("no assets given")
    assets = list(days_by_asset)
    date_sets = [{day.date for day in days_by_asset[a]} for a in assets]
    dates = sorted(set.intersection(*date_sets))
    if not dates:
        raise DataValidationError("assets share no common dates")
    dropped = len(set.union(*date_sets)) - len(dates)
    if dropped:
        logger.warning(f"Dropped {dropped} date(s) not observed for every asset")

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        rows = list(
            executor.map(lambda a: _test_asset(a, days_by_asset[a], dates, level), assets)
        )

    panel = JumpPanel(
        indicators=np.vstack([r[0] for r in rows]),
        stats=np.vstack([r[1] for r in rows]),
        volatility=np.vstack([r[2] for r in rows]),
        assets=tuple(assets),
        dates=tuple(dates),
    )
    n_quiet = sum(r[3] for r in rows)
    log_event(
        "jumps_detected",
        {
            "message": f"Jump test on {len(assets)} asset(s) x {len(dates)} day(s): "
            f"jump rate {panel.jump_rate():.4f}",
            "n_assets": len(assets),
            "n_days": len(dates),
            "jump_rate": panel.jump_rate(),
            "no_activity_days": n_quiet,
            "level": level,
        },
        logger_name="empirics",
    )
    return panel


# =============================================================================
# Unit-root diagnostics
# =============================================================================


def default_adf_lags(n_periods: int) -> int:
    """floor(12 * (T/100)^(1/4))."""
    return int(math.floor(12.0 * (n_periods / 100.0) ** 0.25))


def adf_pvalue(series: Sequence[float], n_lags: Optional[int] = None) -> float:
    """ADF p-value with a constant and a fixed lag count, clamped to [0.001, 0.999].

    Raises:
        ConfigError: If n_lags < 0.
        DataValidationError: If the series is constant, non-finite or has T <= n_lags + 10.
    """
    y = validate_finite(np.ravel(series), "series")
    p = default_adf_lags(y.size) if n_lags is None else int(n_lags)
    if p < 0:
        raise ConfigError(f"lag count must be >= 0, got {p}")
    if y.size <= p + 10:
        raise DataValidationError(f"series of length {y.size} too short for {p} lag(s)")
    if np.ptp(y) == 0.0:
        raise DataValidationError("series is constant")
    _, pvalue, *_ = adfuller(y, maxlag=p, regression="c", autolag=None)
    return float(np.clip(pvalue, ADF_PVALUE_FLOOR, ADF_PVALUE_CEILING))


def adf_table(factors: np.ndarray, n_lags: Optional[int] = None) -> pd.DataFrame:
    """ADF p-values for each factor column and its first difference."""
    factors = np.asarray(factors, dtype=float)
    if factors.ndim == 1:
        factors = factors[:, None]
    rows = []
    for j in range(factors.shape[1]):
        column = factors[:, j]
        rows.append(
            {
                "factor": j + 1,
                "level": adf_pvalue(column, n_lags),
                "difference": adf_pvalue(np.diff(column), n_lags),
            }
        )
    return pd.DataFrame(rows, columns=["factor", "level", "difference"])


# =============================================================================
# Asset pricing
# =============================================================================


@dataclass(frozen=True)
class GrsResult:
    """GRS test of zero alphas. statistic and pvalue are NaN when skipped."""

    statistic: float
    pvalue: float
    n_factors: int
    skipped: bool = False
    reason: str = ""


@dataclass(frozen=True)
class PricingReport:
    """Base (five-factor) versus augmented (five-factor plus jump factors) models."""

    r2_base: np.ndarray
    r2_augmented: np.ndarray
    grs_base: GrsResult
    grs_augmented: GrsResult
    canonical_corr: np.ndarray
    explained_variation: Optional[pd.DataFrame] = None

    @property
    def r2_increment(self) -> np.ndarray:
        return self.r2_augmented - self.r2_base

    def r2_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "asset": np.arange(1, self.r2_base.size + 1),
                "r2_base": self.r2_base,
                "r2_augmented": self.r2_augmented,
                "r2_increment": self.r2_increment,
            }
        )

    def grs_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"model": name, **vars(result)}
                for name, result in (("base", self.grs_base), ("augmented", self.grs_augmented))
            ]
        )


def _ols(returns: np.ndarray, factors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Regress every asset (rows of N x T returns) on (1, factors); coefficients and residuals."""
    design = np.column_stack([np.ones(factors.shape[0]), factors])
    coef, *_ = np.linalg.lstsq(design, returns.T, rcond=None)
    residuals = returns.T - design @ coef
    return coef.T, residuals


def _r2(returns: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    ssr = np.sum(residuals**2, axis=0)
    sst = np.sum((returns.T - returns.mean(axis=1)) ** 2, axis=0)
    scale = np.maximum(sst, np.finfo(float).tiny)
    r2 = np.where(sst > 0, 1.0 - ssr / scale, 1.0)
    return np.clip(r2, 0.0, 1.0)


def ols_r2(returns: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """Per-asset R^2 of the time-series regression on (1, factors)."""
    returns, factors = _check_pricing_inputs(returns, factors)
    _, residuals = _ols(returns, factors)
    return _r2(returns, residuals)


def grs_test(returns: np.ndarray, factors: np.ndarray) -> GrsResult:
    """Gibbons-Ross-Shanken test that all N intercepts are zero.

    GRS = (T/N) (T-N-K)/(T-K-1) a' S^-1 a / (1 + m' W^-1 m) with S the degrees-of-freedom
    corrected residual covariance, m and W the factor mean and (maximum-likelihood)
    covariance; p-value from F(N, T-N-K). Skipped when T <= N + K.
    """
    returns, factors = _check_pricing_inputs(returns, factors)
    n, t = returns.shape
    k = factors.shape[1]
    if t <= n + k:
        reason = f"T={t} <= N+K={n + k}: GRS needs more periods than assets plus factors"
        logger.warning(f"GRS skipped: {reason}")
        return GrsResult(math.nan, math.nan, k, skipped=True, reason=reason)

    coef, residuals = _ols(returns, factors)
    alpha = coef[:, 0]
    if np.max(np.abs(alpha)) <= 1e-12 * max(1.0, np.max(np.abs(returns))):
        return GrsResult(0.0, 1.0, k)

    sigma = residuals.T @ residuals / (t - k - 1)
    mu = factors.mean(axis=0)
    omega = np.atleast_2d(np.cov(factors, rowvar=False, ddof=0))
    quad_alpha = float(alpha @ np.linalg.pinv(sigma, hermitian=True) @ alpha)
    quad_mu = float(mu @ np.linalg.pinv(omega, hermitian=True) @ mu)
    statistic = max(0.0, (t / n) * (t - n - k) / (t - k - 1) * quad_alpha / (1.0 + quad_mu))
    pvalue = float(stats.f.sf(statistic, n, t - n - k))
    return GrsResult(float(statistic), pvalue, k)


def _orthonormal_basis(a: np.ndarray) -> np.ndarray:
    centered = a - a.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    keep = s > s[0] * max(centered.shape) * np.finfo(float).eps
    return u[:, keep]


def canonical_correlations(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Canonical correlations between the columns of two T-row matrices.

    Singular values of the cross-product of the whitened (orthonormalized, centered)
    inputs, clipped to [0, 1], non-increasing; min(rank a, rank b) values.
    """
    a = validate_finite(np.asarray(a, dtype=float).reshape(len(a), -1), "first factor set")
    b = validate_finite(np.asarray(b, dtype=float).reshape(len(b), -1), "second factor set")
    if a.shape[0] != b.shape[0]:
        raise DataValidationError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    qa, qb = _orthonormal_basis(a), _orthonormal_basis(b)
    if qa.shape[1] == 0 or qb.shape[1] == 0:
        return np.zeros(0)
    corr = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.clip(np.sort(corr)[::-1], 0.0, 1.0)


def _window_explained_variation(returns: np.ndarray, factors: np.ndarray) -> float:
    """Two-stage fit on one window: time-series betas, then per-period cross-sections."""
    coef, _ = _ols(returns, factors)
    betas = np.column_stack([np.ones(returns.shape[0]), coef[:, 1:]])
    gamma, *_ = np.linalg.lstsq(betas, returns, rcond=None)
    ssr = np.sum((returns - betas @ gamma) ** 2)
    sst = np.sum((returns - returns.mean()) ** 2)
    if sst <= 0:
        return 1.0
    return float(np.clip(1.0 - ssr / sst, 0.0, 1.0))


def explained_variation(
    returns: np.ndarray, factors: np.ndarray, window: int
) -> pd.DataFrame:
    """Share of return variation explained by the factors on a moving window.

    Returns:
        DataFrame with columns start, stop (half-open period range) and explained,
        T - window + 1 rows

    Raises:
        ConfigError: If window < K + 2 or window > T.
    """
    returns, factors = _check_pricing_inputs(returns, factors)
    t, k = factors.shape
    window = int(window)
    if window < k + 2:
        raise ConfigError(f"window {window} shorter than K + 2 = {k + 2}")
    if window > t:
        raise ConfigError(f"window {window} longer than the sample ({t})")
    rows = []
    for start in range(t - window + 1):
        stop = start + window
        rows.append(
            {
                "start": start,
                "stop": stop,
                "explained": _window_explained_variation(
                    returns[:, start:stop], factors[start:stop]
                ),
            }
        )
    return pd.DataFrame(rows, columns=["start", "stop", "explained"])


def _check_pricing_inputs(
    returns: np.ndarray, factors: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    returns = validate_finite(np.atleast_2d(returns), "excess returns")
    factors = validate_finite(np.asarray(factors, dtype=float), "factors")
    if factors.ndim == 1:
        factors = factors[:, None]
    if returns.ndim != 2 or factors.ndim != 2:
        raise DataValidationError("returns must be N x T and factors T x K")
    if returns.shape[1] != factors.shape[0]:
        raise DataValidationError(
            f"returns cover {returns.shape[1]} period(s) but factors {factors.shape[0]}"
        )
    return returns, factors


def price(
    excess_returns: np.ndarray,
    ff5: np.ndarray,
    jump_factors: np.ndarray,
    window: Optional[int] = None,
) -> PricingReport:
    """Compare the five-factor model with the model augmented by jump factors.

    Args:
        excess_returns: N x T excess returns
        ff5: T x 5 benchmark factors (any K works)
        jump_factors: T x r estimated factors
        window: If given, also compute explained-variation series for both models

    Returns:
        PricingReport; GRS entries are flagged skipped when T <= N + K
    """
    returns, ff5 = _check_pricing_inputs(excess_returns, ff5)
    _, jump_factors = _check_pricing_inputs(returns, jump_factors)
    augmented = np.column_stack([ff5, jump_factors])

    r2_base = ols_r2(returns, ff5)
    r2_augmented = ols_r2(returns, augmented)
    grs_base = grs_test(returns, ff5)
    grs_augmented = grs_test(returns, augmented)
    canonical = canonical_correlations(jump_factors, ff5)

    ev = None
    if window is not None:
        base = explained_variation(returns, ff5, window)
        aug = explained_variation(returns, augmented, window)
        ev = base.rename(columns={"explained": "base"})
        ev["augmented"] = aug["explained"].to_numpy()

    report = PricingReport(
        r2_base=r2_base,
        r2_augmented=r2_augmented,
        grs_base=grs_base,
        grs_augmented=grs_augmented,
        canonical_corr=canonical,
        explained_variation=ev,
    )
    log_event(
        "pricing_done",
        {
            "message": f"Pricing on {returns.shape[0]} asset(s): mean R^2 "
            f"{r2_base.mean():.4f} -> {r2_augmented.mean():.4f}",
            "mean_r2_base": float(r2_base.mean()),
            "mean_r2_augmented": float(r2_augmented.mean()),
            "grs_base": grs_base.statistic,
            "grs_augmented": grs_augmented.statistic,
            "canonical_corr": canonical,
        },
        level=logging.INFO,
        logger_name="empirics",
    )
    return report


def r2_increment_summary(report: PricingReport) -> Dict[str, float]:
    """Mean, median and 5/10/90/95 percentiles of the per-asset R^2 increase."""
    inc = report.r2_increment
    q: List[float] = np.percentile(inc, [5, 10, 50, 90, 95]).tolist()
    return {
        "mean": float(inc.mean()),
        "p5": q[0],
        "p10": q[1],
        "median": q[2],
        "p90": q[3],
        "p95": q[4],
    }
