"""Factor-number selection by thresholding the loading Gram eigenvalues.

The model is fitted with k >= r factors; after normalization the diagonal of
Lambda'Lambda/N holds k non-increasing values, of which about r stay bounded away from
zero. The selected count is the number of values above

    nonstationary index:  pi = sigma_1 * (C^2 T^{-1/2})^{-1/3}
    cointegrated index:   pi = sigma_1 * C^{-2/3}

with C = min(sqrt(N), sqrt(T)).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nsbfm.config import DEFAULT_K_MAX
from nsbfm.linkfn import LinkKind
from nsbfm.logging_config import get_logger, log_event
from nsbfm.mle import EstimationConfig, fit
from nsbfm.models import FitResult, Panel
from nsbfm.validation import ConfigError, DataValidationError

__all__ = [
    "RankRegime",
    "RankReport",
    "rank_threshold",
    "count_above",
    "select_rank",
    "select_rank_by_block",
]

logger = get_logger("rankselect")


class RankRegime(str, Enum):
    NONSTATIONARY = "nonstat"
    COINTEGRATED = "coint"

    @classmethod
    def parse(cls, value: Union[str, "RankRegime"]) -> "RankRegime":
        if isinstance(value, RankRegime):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ConfigError(f"unknown regime {value!r}; expected nonstat or coint")


@dataclass(frozen=True)
class RankReport:
    """Outcome of one rank selection."""

    k_fit: int
    sigma: np.ndarray
    threshold: float
    r_hat: int
    regime: RankRegime
    c_nt: float
    fit: FitResult

    def to_frame(self) -> pd.DataFrame:
        """One row per candidate factor, with the selection in every row."""
        return pd.DataFrame(
            {
                "j": np.arange(1, self.k_fit + 1),
                "sigma": self.sigma,
                "above_threshold": self.sigma > self.threshold,
                "threshold": self.threshold,
                "r_hat": self.r_hat,
                "k_fit": self.k_fit,
                "regime": self.regime.value,
                "c_nt": self.c_nt,
            }
        )


def rank_threshold(
    sigma: Sequence[float], n_units: int, n_periods: int, regime: RankRegime
) -> float:
    """Threshold pi scaled by the largest eigenvalue sigma_1."""
    regime = RankRegime.parse(regime)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0:
        return 0.0
    c_sq = min(n_units, n_periods)
    if regime is RankRegime.NONSTATIONARY:
        shrink = (c_sq / np.sqrt(n_periods)) ** (-1.0 / 3.0)
    else:
        shrink = c_sq ** (-1.0 / 3.0)
    return float(sigma.max() * shrink)


def count_above(sigma: Sequence[float], threshold: float) -> int:
    """#{j : sigma_j > threshold}."""
    return int(np.sum(np.asarray(sigma, dtype=float) > threshold))


def select_rank(
    panel: Panel,
    kind: LinkKind,
    k_max: int = DEFAULT_K_MAX,
    regime: RankRegime = RankRegime.NONSTATIONARY,
    cfg: Optional[EstimationConfig] = None,
) -> RankReport:
    """Fit with k_max factors and count normalized loading eigenvalues above the threshold.

    Raises:
        ConfigError: If k_max < 1.
        NormalizationError: If the k_max-factor fit fails to normalize.
    """
    if k_max < 1:
        raise ConfigError(f"k_max must be >= 1, got {k_max}")
    regime = RankRegime.parse(regime)
    cfg = (cfg or EstimationConfig(n_factors=k_max)).with_factors(k_max)

    result = fit(panel, kind, cfg)
    sigma = np.clip(np.asarray(result.sigma_hat, dtype=float), 0.0, None)
    threshold = rank_threshold(sigma, panel.n_units, panel.n_periods, regime)
    r_hat = count_above(sigma, threshold)
    c_nt = float(np.sqrt(min(panel.n_units, panel.n_periods)))

    log_event(
        "rank_selected",
        {
            "message": f"Selected r_hat={r_hat} of k={k_max} ({regime.value})",
            "r_hat": r_hat,
            "k_fit": k_max,
            "threshold": threshold,
            "sigma": sigma,
            "regime": regime.value,
        },
        level=logging.INFO,
        logger_name="rankselect",
    )
    return RankReport(
        k_fit=k_max,
        sigma=sigma,
        threshold=threshold,
        r_hat=r_hat,
        regime=regime,
        c_nt=c_nt,
        fit=result,
    )


def _block_bounds(n_periods: int, blocks: Union[int, Sequence[Tuple[int, int]]]):
    if isinstance(blocks, (int, np.integer)):
        if blocks < 2:
            raise ConfigError(f"block length must be >= 2, got {blocks}")
        bounds = [(s, min(s + int(blocks), n_periods)) for s in range(0, n_periods, int(blocks))]
        # a one-period tail joins the previous block
        if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
            bounds[-2:] = [(bounds[-2][0], n_periods)]
        return bounds
    bounds = [(int(a), int(b)) for a, b in blocks]
    for a, b in bounds:
        if not 0 <= a < b <= n_periods:
            raise DataValidationError(f"period block [{a}, {b}) outside [0, {n_periods})")
    return bounds


def select_rank_by_block(
    panel: Panel,
    blocks: Union[int, Sequence[Tuple[int, int]]],
    kind: LinkKind,
    k_max: int = DEFAULT_K_MAX,
    regime: RankRegime = RankRegime.NONSTATIONARY,
    cfg: Optional[EstimationConfig] = None,
) -> List[RankReport]:
    """Select the factor count separately on consecutive period blocks.

    Args:
        blocks: Block length, or explicit half-open [start, stop) period ranges

    Returns:
        One RankReport per block, in period order
    """
    reports = []
    for start, stop in _block_bounds(panel.n_periods, blocks):
        sub = Panel(y=panel.y[:, start:stop], x=panel.x[:, start:stop])
        logger.info(f"Rank selection on periods [{start}, {stop})")
        reports.append(select_rank(sub, kind, k_max, regime, cfg))
    return reports
