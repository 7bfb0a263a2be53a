"""Monte Carlo replications of the estimator on the simulated designs.

Each replication simulates a panel, selects the factor count with k_max factors, fits the
model with the true r = 2 and records

    MAE1  mean |zhat_it - z0_it|
    MAE2  mean |betahat_i'x_it - beta0_i'x_it|
    MAE3  mean |lambdahat_i'fhat_t - lambda0_i'f0_t|
    MAE4  mean_i ||betahat_i - beta0_i||

plus mae4_coord, the same coefficient error averaged per coefficient (||.||_1 / q rather
than the Euclidean norm).

Replications are independent (their RNG streams are keyed by replication number), run on a
thread pool and are aggregated in replication order, so reports do not depend on the number
of threads.
"""

import logging
import math
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from nsbfm.config import DEFAULT_COVERAGE_LEVEL, DEFAULT_K_MAX, resolve_threads
from nsbfm.dgp import DgpCase, DgpSpec, SimulatedPanel, simulate
from nsbfm.inference import common_component_sd, covariances
from nsbfm.linkfn import LinkKind
from nsbfm.logging_config import get_logger, log_event
from nsbfm.mle import EstimationConfig, fit
from nsbfm.models import FitResult
from nsbfm.rankselect import RankRegime, select_rank
from nsbfm.shutdown import get_shutdown_handler
from nsbfm.timing import timer
from nsbfm.validation import ConfigError, NsbfmError, validate_level

__all__ = [
    "McConfig",
    "McReport",
    "CoverageReport",
    "replication_errors",
    "run_mc",
    "run_grid",
    "format_table",
    "coverage_study",
]

logger = get_logger("montecarlo")

Estimator = Callable[[SimulatedPanel, EstimationConfig], FitResult]
RankSelector = Callable[[SimulatedPanel, int, EstimationConfig], int]

METRICS = ("mae1", "mae2", "mae3", "mae4", "mae4_coord")


@dataclass(frozen=True)
class McConfig:
    """Simulation design plus estimation settings.

    k_max = 0 skips rank selection. The rank regime follows the design (nonstationary for
    Case 1, cointegrated for Case 2) unless given.
    """

    spec: DgpSpec
    n_replications: int
    estimation: Optional[EstimationConfig] = None
    k_max: int = DEFAULT_K_MAX
    regime: Optional[RankRegime] = None

    def __post_init__(self) -> None:
        if self.n_replications < 1:
            raise ConfigError(f"M must be >= 1, got {self.n_replications}")
        if self.k_max < 0:
            raise ConfigError(f"k_max must be >= 0, got {self.k_max}")
        estimation = self.estimation or EstimationConfig(n_factors=self.spec.n_factors)
        object.__setattr__(self, "estimation", estimation.with_factors(self.spec.n_factors))
        if self.regime is None:
            regime = (
                RankRegime.COINTEGRATED
                if self.spec.case is DgpCase.COINTEGRATED
                else RankRegime.NONSTATIONARY
            )
        else:
            regime = RankRegime.parse(self.regime)
        object.__setattr__(self, "regime", regime)


@dataclass(frozen=True)
class McReport:
    """Aggregated and per-replication statistics.

    Aggregates average the successful replications; failed ones appear in
    per_replication with status "failed" and NaN statistics.
    """

    mae1: float
    mae2: float
    mae3: float
    mae4: float
    mae4_coord: float
    mean_rhat: float
    per_replication: pd.DataFrame
    n_failed: int
    n_completed: int
    interrupted: bool
    config: McConfig
    failures: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def share_rhat_true(self) -> float:
        """Fraction of successful replications selecting the true factor count."""
        ok = self.per_replication[self.per_replication["status"] == "ok"]["r_hat"].dropna()
        if ok.empty:
            return float("nan")
        return float(np.mean(ok.to_numpy() == self.config.spec.n_factors))

    def summary_frame(self) -> pd.DataFrame:
        spec = self.config.spec
        return pd.DataFrame(
            [
                {
                    "case": int(spec.case),
                    "link": spec.link.value,
                    "N": spec.n_units,
                    "T": spec.n_periods,
                    "M": self.config.n_replications,
                    "completed": self.n_completed,
                    "failed": self.n_failed,
                    "interrupted": self.interrupted,
                    "mean_rhat": self.mean_rhat,
                    "mae1": self.mae1,
                    "mae2": self.mae2,
                    "mae3": self.mae3,
                    "mae4": self.mae4,
                    "mae4_coord": self.mae4_coord,
                }
            ]
        )


def replication_errors(sim: SimulatedPanel, result: FitResult) -> Dict[str, float]:
    """MAE1-MAE4 of a fit against the simulation truth."""
    truth, est = sim.truth, result.params
    x = sim.panel.x
    return {
        "mae1": float(np.mean(np.abs(result.zhat - sim.z_true))),
        "mae2": float(np.mean(np.abs(est.covariate_part(x) - truth.covariate_part(x)))),
        "mae3": float(np.mean(np.abs(est.common_component() - truth.common_component()))),
        "mae4": float(np.mean(np.linalg.norm(est.b - truth.b, axis=1))),
        "mae4_coord": float(np.mean(np.abs(est.b - truth.b))) if est.b.size else 0.0,
    }


def _default_estimator(sim: SimulatedPanel, cfg: EstimationConfig) -> FitResult:
    return fit(sim.panel, sim.spec.link, cfg)


def _rank_selector_for(regime: RankRegime) -> RankSelector:
    def selector(sim: SimulatedPanel, k_max: int, cfg: EstimationConfig) -> int:
        return select_rank(sim.panel, sim.spec.link, k_max, regime, cfg).r_hat

    return selector


def _replicate(
    cfg: McConfig, replication: int, estimator: Estimator, rank_selector: RankSelector
) -> Dict[str, object]:
    row: Dict[str, object] = {"replication": replication, "r_hat": np.nan}
    row.update({m: np.nan for m in METRICS})
    try:
        with timer("mc_replication"):
            sim = simulate(cfg.spec.with_replication(replication))
            if cfg.k_max > 0:
                row["r_hat"] = rank_selector(sim, cfg.k_max, cfg.estimation)
            result = estimator(sim, cfg.estimation)
            if not result.converged:
                raise NsbfmError(
                    f"fit did not converge after {result.n_iterations} iteration(s)"
                )
            row.update(replication_errors(sim, result))
        row["status"] = "ok"
        row["error"] = ""
    except (NsbfmError, ArithmeticError, np.linalg.LinAlgError) as e:
        row["status"] = "failed"
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def run_mc(
    cfg: McConfig,
    estimator: Optional[Estimator] = None,
    rank_selector: Optional[RankSelector] = None,
    threads: Optional[int] = None,
) -> McReport:
    """Run cfg.n_replications replications and aggregate them.

    Args:
        cfg: Design and estimation settings
        estimator: Replaces the alternating fit (receives the simulated panel with truth)
        rank_selector: Replaces rank selection; returns r_hat
        threads: Worker threads (default: NSBFM_THREADS or CPU count)

    Returns:
        McReport; failed replications are excluded from the means and counted. If a shutdown
        is requested, no new replications start and the report is marked interrupted.
    """
    estimator = estimator or _default_estimator
    rank_selector = rank_selector or _rank_selector_for(cfg.regime)
    n_threads = resolve_threads(threads)
    shutdown = get_shutdown_handler()
    spec = cfg.spec

    logger.info(
        f"Monte Carlo: case {int(spec.case)}, {spec.link.value}, N={spec.n_units}, "
        f"T={spec.n_periods}, M={cfg.n_replications}, {n_threads} thread(s)"
    )

    rows: Dict[int, Dict[str, object]] = {}
    interrupted = False
    with ThreadPoolExecutor(max_workers=n_threads) as executor, ExitStack() as stack:
        # A forced quit drops queued replications instead of waiting for them
        stack.callback(
            shutdown.register_cleanup(lambda: executor.shutdown(wait=False, cancel_futures=True))
        )
        pending: Dict[int, Future] = {}
        next_rep = 0
        while next_rep < cfg.n_replications or pending:
            while (
                next_rep < cfg.n_replications
                and len(pending) < 2 * n_threads
                and not shutdown.shutdown_requested
            ):
                pending[next_rep] = executor.submit(
                    _replicate, cfg, next_rep, estimator, rank_selector
                )
                next_rep += 1
            if shutdown.shutdown_requested and next_rep < cfg.n_replications:
                interrupted = True
            if not pending:
                break
            # Collect in submission order
            rep = min(pending)
            row = pending.pop(rep).result()
            rows[rep] = row
            if row["status"] == "ok":
                log_event(
                    "mc_replication",
                    {k: row[k] for k in ("replication", "r_hat", *METRICS)},
                    level=logging.DEBUG,
                    logger_name="montecarlo",
                )
            else:
                log_event(
                    "mc_failure",
                    {
                        "message": f"Replication {rep} failed: {row['error']}",
                        "replication": rep,
                        "error": row["error"],
                    },
                    level=logging.WARNING,
                    logger_name="montecarlo",
                )

    frame = pd.DataFrame([rows[k] for k in sorted(rows)])
    frame = frame[["replication", "status", "r_hat", *METRICS, "error"]]
    ok = frame[frame["status"] == "ok"]

    def mean_of(column: str) -> float:
        values = ok[column].dropna().to_numpy(dtype=float)
        return float(np.mean(values)) if values.size else float("nan")

    report = McReport(
        mae1=mean_of("mae1"),
        mae2=mean_of("mae2"),
        mae3=mean_of("mae3"),
        mae4=mean_of("mae4"),
        mae4_coord=mean_of("mae4_coord"),
        mean_rhat=mean_of("r_hat"),
        per_replication=frame.reset_index(drop=True),
        n_failed=int((frame["status"] == "failed").sum()),
        n_completed=len(frame),
        interrupted=interrupted,
        config=cfg,
        failures=tuple(frame.loc[frame["status"] == "failed", "error"].astype(str)),
    )

    log_event(
        "mc_done",
        {
            "message": f"Monte Carlo done: {report.n_completed - report.n_failed} ok, "
            f"{report.n_failed} failed{' (interrupted)' if interrupted else ''}",
            "mae1": report.mae1,
            "mae2": report.mae2,
            "mae3": report.mae3,
            "mae4": report.mae4,
            "mae4_coord": report.mae4_coord,
            "mean_rhat": report.mean_rhat,
            "n_failed": report.n_failed,
            "interrupted": interrupted,
        },
        logger_name="montecarlo",
    )
    return report


def run_grid(
    case: DgpCase,
    link: LinkKind,
    sizes: Sequence[Tuple[int, int]],
    n_replications: int,
    seed: int = 0,
    estimation: Optional[EstimationConfig] = None,
    k_max: int = DEFAULT_K_MAX,
    threads: Optional[int] = None,
) -> List[McReport]:
    """One McReport per (N, T) cell, in the order given."""
    reports = []
    for n_units, n_periods in sizes:
        if get_shutdown_handler().shutdown_requested:
            break
        spec = DgpSpec(case=case, n_units=n_units, n_periods=n_periods, link=link, seed=seed)
        cfg = McConfig(spec=spec, n_replications=n_replications, estimation=estimation, k_max=k_max)
        reports.append(run_mc(cfg, threads=threads))
    return reports


def _fmt(value: float) -> str:
    return "     -" if value is None or math.isnan(value) else f"{value:.4f}"


def format_table(reports: Sequence[McReport]) -> str:
    """Text table with r_hat and MAE 1-4 rows and one column per (N, T) cell."""
    if not reports:
        return ""
    spec = reports[0].config.spec
    header_cells = [f"N={r.config.spec.n_units},T={r.config.spec.n_periods}" for r in reports]
    width = max(12, *(len(h) for h in header_cells)) + 2
    title = (
        f"Case {int(spec.case)} "
        f"({'cointegrated' if spec.case is DgpCase.COINTEGRATED else 'nonstationary'}), "
        f"{spec.link.value}, M={reports[0].config.n_replications}"
    )
    lines = [title, f"{'':<8}" + "".join(h.rjust(width) for h in header_cells)]
    rows = [("r_hat", "mean_rhat")] + [(f"MAE {k}", f"mae{k}") for k in range(1, 5)]
    rows.append(("MAE 4c", "mae4_coord"))
    for label, attr in rows:
        lines.append(f"{label:<8}" + "".join(_fmt(getattr(r, attr)).rjust(width) for r in reports))
    failed = sum(r.n_failed for r in reports)
    if failed:
        lines.append(f"({failed} failed replication(s) excluded)")
    if any(r.interrupted for r in reports):
        lines.append("(interrupted: partial results)")
    return "\n".join(lines)


@dataclass(frozen=True)
class CoverageReport:
    """Empirical coverage of common-component intervals over non-degenerate cells."""

    coverage: float
    n_cells: int
    level: float
    per_replication: pd.DataFrame


def coverage_study(
    spec: DgpSpec,
    n_replications: int,
    level: float = DEFAULT_COVERAGE_LEVEL,
    estimation: Optional[EstimationConfig] = None,
    threads: Optional[int] = None,
) -> CoverageReport:
    """Share of cells whose interval for lambda_i'f_t covers the true common component.

    Cells in degenerate units or periods are left out.
    """
    level = validate_level(level)
    est_cfg = (estimation or EstimationConfig(n_factors=spec.n_factors)).with_factors(
        spec.n_factors
    )
    quantile = float(stats.norm.ppf(0.5 + level / 2.0))

    def one(replication: int) -> Dict[str, object]:
        sim = simulate(spec.with_replication(replication))
        try:
            result = fit(sim.panel, spec.link, est_cfg)
        except (NsbfmError, ArithmeticError) as e:
            logger.warning(f"Coverage replication {replication} failed: {e}")
            return {"replication": replication, "covered": 0, "cells": 0}
        report = covariances(sim.panel, result)
        sd = common_component_sd(result, report)
        mask = np.ones(result.zhat.shape, dtype=bool)
        mask[list(report.degenerate_units), :] = False
        mask[:, list(report.degenerate_periods)] = False
        err = np.abs(result.params.common_component() - sim.truth.common_component())
        covered = (err <= quantile * sd) & mask
        return {
            "replication": replication,
            "covered": int(covered.sum()),
            "cells": int(mask.sum()),
        }

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        rows = list(executor.map(one, range(n_replications)))

    frame = pd.DataFrame(rows)
    cells = int(frame["cells"].sum())
    coverage = float(frame["covered"].sum() / cells) if cells else float("nan")
    frame["coverage"] = frame["covered"] / frame["cells"].where(frame["cells"] > 0)
    logger.info(f"Coverage {coverage:.4f} over {cells} cells at level {level}")
    return CoverageReport(coverage=coverage, n_cells=cells, level=level, per_replication=frame)
