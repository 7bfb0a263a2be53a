"""Plug-in inference for a fitted binary factor model.

Covariances come from the dominant Hessian terms

    J_11(i) = -sum_t K(z_it) g_it g_it'      g_it = (x_it', f_t')'
    J_22(t) = -sum_i K(z_it) lambda_i lambda_i'

(`full=True` adds sum Mdot(z) (y - Psi(z)) g g', which is zero for logit). Blocks whose
smallest eigenvalue is below 1e-10 * trace are inverted with a pseudo-inverse and reported
as degenerate, which is common for late periods when the index drifts away from zero.
"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from nsbfm.config import DEFAULT_COVERAGE_LEVEL, DEGENERACY_RTOL
from nsbfm.linkfn import LinkKind, k_kernel, mdot, psi, psidot
from nsbfm.logging_config import get_logger
from nsbfm.models import FitResult, Panel
from nsbfm.validation import DataValidationError, validate_level

__all__ = [
    "InferenceReport",
    "ProbInterval",
    "hessian_unit",
    "hessian_period",
    "unit_hessians",
    "period_hessians",
    "covariances",
    "prob_interval",
    "common_component_interval",
    "common_component_sd",
    "prob_interval_table",
    "local_time",
    "local_time_estimate",
    "mse",
    "mse_nt",
    "infer",
]

logger = get_logger("inference")


@dataclass(frozen=True)
class InferenceReport:
    """Plug-in covariances and fit statistics.

    cov_alpha has shape (N, q + r, q + r) and cov_f shape (T, r, r). local_time and the MSE
    fields are filled by `infer`; `covariances` leaves them unset.
    """

    cov_alpha: np.ndarray
    cov_f: np.ndarray
    degenerate_units: Tuple[int, ...]
    degenerate_periods: Tuple[int, ...]
    local_time: Optional[np.ndarray] = None
    mse: Optional[float] = None
    mse_nt: Optional[float] = None
    full_hessian: bool = False


@dataclass(frozen=True)
class ProbInterval:
    """Delta-method interval for a success probability."""

    lower: float
    upper: float
    estimate: float
    sd: float
    degenerate: bool = False


def _kind(fit: FitResult, kind: Optional[LinkKind]) -> LinkKind:
    return LinkKind.parse(kind) if kind is not None else fit.link


def _check_unit(fit: FitResult, i: int) -> None:
    if not 0 <= i < fit.zhat.shape[0]:
        raise DataValidationError(f"unit {i} out of range [0, {fit.zhat.shape[0]})")


def _check_period(fit: FitResult, t: int) -> None:
    if not 0 <= t < fit.zhat.shape[1]:
        raise DataValidationError(f"period {t} out of range [0, {fit.zhat.shape[1]})")


def _curvature(panel: Panel, fit: FitResult, kind: LinkKind, full: bool) -> np.ndarray:
    """Per-cell weight w such that the block Hessian is -sum w g g'."""
    w = k_kernel(fit.zhat, kind)
    if full and kind is LinkKind.PROBIT:
        w = w - mdot(fit.zhat, kind) * (panel.y - psi(fit.zhat, kind))
    return w


def unit_hessians(
    panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None, full: bool = False
) -> np.ndarray:
    """J_11(i) for every unit, shape (N, q + r, q + r)."""
    kind = _kind(fit, kind)
    params = fit.params
    params.check_compatible(panel)
    w = _curvature(panel, fit, kind, full)
    g = np.concatenate(
        [panel.x, np.broadcast_to(params.f, (panel.n_units,) + params.f.shape)], axis=2
    )
    return -(np.swapaxes(g * w[:, :, None], 1, 2) @ g)


def period_hessians(
    panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None, full: bool = False
) -> np.ndarray:
    """J_22(t) for every period, shape (T, r, r)."""
    kind = _kind(fit, kind)
    lam = fit.params.lam
    fit.params.check_compatible(panel)
    w = _curvature(panel, fit, kind, full)
    return -np.einsum("it,ia,ib->tab", w, lam, lam, optimize=True)


def hessian_unit(
    panel: Panel, fit: FitResult, i: int, kind: Optional[LinkKind] = None, full: bool = False
) -> np.ndarray:
    """-sum_t K(z_it) g_it g_it' for unit i."""
    _check_unit(fit, i)
    kind = _kind(fit, kind)
    w = _curvature(panel, fit, kind, full)[i]
    g = np.hstack([panel.x[i], fit.params.f])
    return -(g.T * w) @ g


def hessian_period(
    panel: Panel, fit: FitResult, t: int, kind: Optional[LinkKind] = None, full: bool = False
) -> np.ndarray:
    """-sum_i K(z_it) lambda_i lambda_i' for period t."""
    _check_period(fit, t)
    kind = _kind(fit, kind)
    w = _curvature(panel, fit, kind, full)[:, t]
    lam = fit.params.lam
    return -(lam.T * w) @ lam


def _psd_inverse(
    information: np.ndarray, reference_trace: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Invert a stack of symmetric information matrices (-J).

    Eigenvalues at or below 1e-10 * trace are dropped (Moore-Penrose), which also keeps the
    result PSD when a full Hessian is indefinite. A block whose trace is below 1e-10 times
    the trace of its unweighted design Gram (`reference_trace`) carries no information and
    is inverted to zero.

    Returns:
        (covariances, degenerate mask)
    """
    n, dim, _ = information.shape
    if dim == 0:
        return np.zeros_like(information), np.zeros(n, dtype=bool)
    sym = 0.5 * (information + np.swapaxes(information, 1, 2))
    w, v = np.linalg.eigh(sym)
    trace = np.trace(sym, axis1=1, axis2=2)
    tol = DEGENERACY_RTOL * np.abs(trace)
    informative = (trace > 0) & (trace >= DEGENERACY_RTOL * reference_trace)
    keep = (w > tol[:, None]) & informative[:, None]
    inv_w = np.divide(1.0, w, out=np.zeros_like(w), where=keep)
    cov = (v * inv_w[:, None, :]) @ np.swapaxes(v, 1, 2)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    degenerate = ~np.all(keep, axis=1)
    return cov, degenerate


def covariances(
    panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None, full: bool = False
) -> InferenceReport:
    """Plug-in covariances [-J_11(i)]^-1 and [-J_22(t)]^-1.

    Degenerate blocks are inverted by pseudo-inverse and listed in the report; nothing is
    raised for them.
    """
    kind = _kind(fit, kind)
    params = fit.params
    unit_ref = np.sum(panel.x**2, axis=(1, 2)) + np.sum(params.f**2)
    period_ref = np.full(panel.n_periods, np.sum(params.lam**2))
    cov_alpha, deg_units = _psd_inverse(-unit_hessians(panel, fit, kind, full), unit_ref)
    cov_f, deg_periods = _psd_inverse(-period_hessians(panel, fit, kind, full), period_ref)
    report = InferenceReport(
        cov_alpha=cov_alpha,
        cov_f=cov_f,
        degenerate_units=tuple(int(i) for i in np.flatnonzero(deg_units)),
        degenerate_periods=tuple(int(t) for t in np.flatnonzero(deg_periods)),
        full_hessian=full,
    )
    if report.degenerate_units or report.degenerate_periods:
        logger.warning(
            f"Pseudo-inverse used for {len(report.degenerate_units)} unit and "
            f"{len(report.degenerate_periods)} period block(s)"
        )
    return report


def _quantile(level: float) -> float:
    return float(stats.norm.ppf(0.5 + 0.5 * validate_level(level)))


def prob_interval(
    panel: Panel,
    fit: FitResult,
    report: InferenceReport,
    i: int,
    t: int,
    level: float = DEFAULT_COVERAGE_LEVEL,
    kind: Optional[LinkKind] = None,
) -> ProbInterval:
    """Delta-method interval for Psi(z_0it), clipped to [0, 1].

    The variance is Psi'(z)^2 (g' cov_alpha[i] g + lambda' cov_f[t] lambda). Cells in a
    degenerate unit or period get the uninformative interval [0, 1].
    """
    _check_unit(fit, i)
    _check_period(fit, t)
    kind = _kind(fit, kind)
    z = float(fit.zhat[i, t])
    p = psi(z, kind)
    if i in report.degenerate_units or t in report.degenerate_periods:
        return ProbInterval(lower=0.0, upper=1.0, estimate=p, sd=float("nan"), degenerate=True)

    g = np.concatenate([panel.x[i, t], fit.params.f[t]])
    lam = fit.params.lam[i]
    var_index = g @ report.cov_alpha[i] @ g + lam @ report.cov_f[t] @ lam
    sd = psidot(z, kind) * float(np.sqrt(max(var_index, 0.0)))
    half = _quantile(level) * sd
    return ProbInterval(
        lower=max(0.0, p - half), upper=min(1.0, p + half), estimate=p, sd=sd
    )


def common_component_interval(
    fit: FitResult,
    report: InferenceReport,
    i: int,
    t: int,
    level: float = DEFAULT_COVERAGE_LEVEL,
) -> ProbInterval:
    """Interval for lambda_0i'f_0t with variance f' cov_lambda(i) f + lambda' cov_f(t) lambda.

    cov_lambda(i) is the loading block of cov_alpha[i]. The returned `estimate` is the fitted
    common component, not a probability.
    """
    _check_unit(fit, i)
    _check_period(fit, t)
    r = fit.params.n_factors
    lam, f = fit.params.lam[i], fit.params.f[t]
    estimate = float(lam @ f)
    degenerate = i in report.degenerate_units or t in report.degenerate_periods
    cov_lam = report.cov_alpha[i][-r:, -r:] if r else np.zeros((0, 0))
    var = f @ cov_lam @ f + lam @ report.cov_f[t] @ lam
    sd = float(np.sqrt(max(var, 0.0)))
    half = _quantile(level) * sd
    return ProbInterval(
        lower=estimate - half,
        upper=estimate + half,
        estimate=estimate,
        sd=sd,
        degenerate=degenerate,
    )


def common_component_sd(fit: FitResult, report: InferenceReport) -> np.ndarray:
    """Standard errors of lambda_i'f_t for every cell, shape (N, T)."""
    r = fit.params.n_factors
    lam, f = fit.params.lam, fit.params.f
    if r == 0:
        return np.zeros(fit.zhat.shape)
    cov_lam = report.cov_alpha[:, -r:, -r:]
    var = np.einsum("ta,iab,tb->it", f, cov_lam, f, optimize=True) + np.einsum(
        "ia,tab,ib->it", lam, report.cov_f, lam, optimize=True
    )
    return np.sqrt(np.clip(var, 0.0, None))


def _degenerate_cells(fit: FitResult, report: InferenceReport) -> np.ndarray:
    mask = np.zeros(fit.zhat.shape, dtype=bool)
    mask[list(report.degenerate_units), :] = True
    mask[:, list(report.degenerate_periods)] = True
    return mask


def prob_interval_table(
    panel: Panel,
    fit: FitResult,
    report: InferenceReport,
    level: float = DEFAULT_COVERAGE_LEVEL,
    kind: Optional[LinkKind] = None,
) -> pd.DataFrame:
    """`prob_interval` for every cell, one row per (unit, period)."""
    kind = _kind(fit, kind)
    params = fit.params
    g = np.concatenate(
        [panel.x, np.broadcast_to(params.f, (panel.n_units,) + params.f.shape)], axis=2
    )
    var = np.einsum("itp,ipq,itq->it", g, report.cov_alpha, g, optimize=True) + np.einsum(
        "ia,tab,ib->it", params.lam, report.cov_f, params.lam, optimize=True
    )
    sd = psidot(fit.zhat, kind) * np.sqrt(np.clip(var, 0.0, None))
    p = psi(fit.zhat, kind)
    half = _quantile(level) * sd
    degenerate = _degenerate_cells(fit, report)
    cells = np.indices(p.shape).reshape(2, -1)
    return pd.DataFrame(
        {
            "unit": cells[0],
            "period": cells[1],
            "estimate": p.ravel(),
            "lower": np.where(degenerate, 0.0, np.clip(p - half, 0.0, 1.0)).ravel(),
            "upper": np.where(degenerate, 1.0, np.clip(p + half, 0.0, 1.0)).ravel(),
            "sd": np.where(degenerate, np.nan, sd).ravel(),
            "degenerate": degenerate.ravel(),
        }
    )


def local_time_estimate(z_path: np.ndarray, alpha_norm: float, kind: LinkKind) -> float:
    """||alpha|| T^{-1/2} sum_t Psi'(z_t) for an index path of length T."""
    z_path = np.asarray(z_path, dtype=float).ravel()
    if z_path.size == 0:
        raise DataValidationError("index path is empty")
    return float(abs(alpha_norm) * np.sum(psidot(z_path, kind)) / np.sqrt(z_path.size))


def local_time(fit: FitResult, i: int, kind: Optional[LinkKind] = None) -> float:
    """Local-time estimate at level 0 for unit i's fitted index path."""
    _check_unit(fit, i)
    alpha_norm = float(np.linalg.norm(fit.params.alpha[i]))
    return local_time_estimate(fit.zhat[i], alpha_norm, _kind(fit, kind))


def _squared_residuals(panel: Panel, fit: FitResult, kind: LinkKind) -> float:
    if fit.zhat.shape != panel.y.shape:
        raise DataValidationError(
            f"zhat has shape {fit.zhat.shape}, panel is {panel.y.shape}"
        )
    return float(np.sum((panel.y - psi(fit.zhat, kind)) ** 2))


def mse(panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None) -> float:
    """sum_it (y - Psi(z))^2 / (N sqrt(T))."""
    kind = _kind(fit, kind)
    return _squared_residuals(panel, fit, kind) / (panel.n_units * np.sqrt(panel.n_periods))


def mse_nt(panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None) -> float:
    """sum_it (y - Psi(z))^2 / (N T), the scaling that settles for cointegrated indices."""
    kind = _kind(fit, kind)
    return _squared_residuals(panel, fit, kind) / (panel.n_units * panel.n_periods)


def infer(
    panel: Panel, fit: FitResult, kind: Optional[LinkKind] = None, full: bool = False
) -> InferenceReport:
    """Covariances, local-time vector and both MSE statistics in one report."""
    kind = _kind(fit, kind)
    report = covariances(panel, fit, kind, full)
    alpha_norm = np.linalg.norm(fit.params.alpha, axis=1)
    local = alpha_norm * np.sum(psidot(fit.zhat, kind), axis=1) / np.sqrt(panel.n_periods)
    return replace(
        report,
        local_time=local,
        mse=mse(panel, fit, kind),
        mse_nt=mse_nt(panel, fit, kind),
    )
