"""File-in/file-out workflows behind the command-line subcommands.

Each workflow reads its inputs, runs one library operation and writes CSV outputs under an
output directory. They return a summary dict (written paths plus headline numbers) that the
CLI prints and records in the run manifest.
"""

import csv
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nsbfm.dgp import DgpSpec, simulate
from nsbfm.empirics import IntradayDay, adf_table, build_jump_panel, price, r2_increment_summary
from nsbfm.inference import common_component_sd, infer, prob_interval_table
from nsbfm.linkfn import LinkKind
from nsbfm.logging_config import get_logger
from nsbfm.mle import EstimationConfig, fit
from nsbfm.montecarlo import McConfig, format_table, run_mc
from nsbfm.panel_io import (
    load_fit,
    load_panel,
    read_matrix,
    save_fit,
    save_panel,
    save_params,
    write_matrix,
    write_table,
)
from nsbfm.rankselect import RankRegime, select_rank, select_rank_by_block
from nsbfm.validation import DataValidationError, PanelParseError

__all__ = [
    "simulate_workflow",
    "fit_workflow",
    "rank_workflow",
    "infer_workflow",
    "mc_workflow",
    "jumps_workflow",
    "price_workflow",
    "read_intraday_file",
    "read_intraday_dir",
    "read_dated_table",
]

logger = get_logger("workflows")

PathLike = Union[str, Path]
FF5_COLUMNS = ("MKT", "SMB", "HML", "RMW", "CMA")


def _out(directory: PathLike) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def simulate_workflow(spec: DgpSpec, out_dir: PathLike) -> Dict[str, Any]:
    """Simulate one panel; write y.csv, x.csv and the truth.

    The truth files are true_B, true_Lambda, true_F and z_true.
    """
    out = _out(out_dir)
    sim = simulate(spec)
    files = save_panel(sim.panel, out)
    files += save_params(sim.truth, out, prefix="true_")
    files.append(write_matrix(out / "z_true.csv", sim.z_true))
    logger.info(
        f"Simulated case {int(spec.case)} {spec.link.value} panel N={spec.n_units}, "
        f"T={spec.n_periods}: {sim.panel.y.mean():.3f} share of ones"
    )
    return {"files": [str(f) for f in files], "share_ones": float(sim.panel.y.mean())}


def _fit_summary(result) -> Dict[str, Any]:
    return {
        "loglik": result.loglik,
        "iterations": result.n_iterations,
        "converged": result.converged,
        "sigma_hat": [float(s) for s in result.sigma_hat],
        "degenerate_units": len(result.degenerate_units),
        "degenerate_periods": len(result.degenerate_periods),
        "non_interior_units": len(result.non_interior_units),
        "non_interior_periods": len(result.non_interior_periods),
    }


def fit_workflow(
    outcome_path: PathLike,
    covariate_path: Optional[PathLike],
    link: LinkKind,
    cfg: EstimationConfig,
    out_dir: PathLike,
) -> Dict[str, Any]:
    """Fit the model; write B, Lambda, F, zhat, trace and sigma.csv."""
    out = _out(out_dir)
    panel = load_panel(outcome_path, covariate_path)
    result = fit(panel, link, cfg)
    files = save_fit(result, out)
    files.append(write_matrix(out / "sigma.csv", np.asarray(result.sigma_hat)[:, None]))
    return {"files": [str(f) for f in files], **_fit_summary(result)}


def rank_workflow(
    outcome_path: PathLike,
    covariate_path: Optional[PathLike],
    link: LinkKind,
    k_max: int,
    regime: RankRegime,
    cfg: EstimationConfig,
    out_dir: PathLike,
    block: Optional[int] = None,
    refit: bool = False,
) -> Dict[str, Any]:
    """Select the factor count; write rank_report.csv (and rank_blocks.csv, refit/ on request)."""
    out = _out(out_dir)
    panel = load_panel(outcome_path, covariate_path)
    report = select_rank(panel, link, k_max, regime, cfg)
    files = [write_table(out / "rank_report.csv", report.to_frame())]
    summary: Dict[str, Any] = {
        "r_hat": report.r_hat,
        "threshold": report.threshold,
        "sigma": [float(s) for s in report.sigma],
        "table": report.to_frame().to_string(index=False),
    }

    if block:
        blocks = select_rank_by_block(panel, block, link, k_max, regime, cfg)
        frame = pd.DataFrame(
            {
                "block": np.arange(1, len(blocks) + 1),
                "r_hat": [b.r_hat for b in blocks],
                "threshold": [b.threshold for b in blocks],
            }
        )
        files.append(write_table(out / "rank_blocks.csv", frame))
        summary["block_r_hat"] = [b.r_hat for b in blocks]

    if refit:
        result = fit(panel, link, cfg.with_factors(report.r_hat))
        files += save_fit(result, out / "refit")
        summary["refit"] = _fit_summary(result)

    summary["files"] = [str(f) for f in files]
    return summary


def infer_workflow(
    outcome_path: PathLike,
    covariate_path: Optional[PathLike],
    fit_dir: PathLike,
    link: LinkKind,
    out_dir: PathLike,
    level: float,
    full: bool = False,
) -> Dict[str, Any]:
    """Plug-in inference for a saved fit.

    Writes cov_alpha.csv and cov_f.csv in long form (block, row, col, value), standard errors
    of the common component, the local-time vector, probability intervals for every cell, the
    degenerate blocks and a one-row summary.
    """
    out = _out(out_dir)
    panel = load_panel(outcome_path, covariate_path)
    result = load_fit(fit_dir, link)
    result.params.check_compatible(panel)
    report = infer(panel, result, link, full=full)

    def long_form(cov: np.ndarray, name: str) -> pd.DataFrame:
        n, p, _ = cov.shape
        idx = np.indices((n, p, p)).reshape(3, -1)
        return pd.DataFrame(
            {name: idx[0], "row": idx[1], "col": idx[2], "value": cov.reshape(-1)}
        )

    intervals = prob_interval_table(panel, result, report, level, link)
    degenerate_frame = pd.DataFrame(
        [("unit", i) for i in report.degenerate_units]
        + [("period", t) for t in report.degenerate_periods],
        columns=["block", "index"],
    )
    summary_frame = pd.DataFrame(
        [
            {
                "mse": report.mse,
                "mse_nt": report.mse_nt,
                "level": level,
                "full_hessian": report.full_hessian,
                "degenerate_units": len(report.degenerate_units),
                "degenerate_periods": len(report.degenerate_periods),
            }
        ]
    )
    files = [
        write_table(out / "cov_alpha.csv", long_form(report.cov_alpha, "unit")),
        write_table(out / "cov_f.csv", long_form(report.cov_f, "period")),
        write_matrix(out / "common_sd.csv", common_component_sd(result, report)),
        write_matrix(out / "local_time.csv", report.local_time[:, None]),
        write_table(out / "prob_intervals.csv", intervals),
        write_table(out / "degenerate.csv", degenerate_frame),
        write_table(out / "inference_summary.csv", summary_frame),
    ]
    return {
        "files": [str(f) for f in files],
        "mse": report.mse,
        "mse_nt": report.mse_nt,
        "degenerate_units": list(report.degenerate_units),
        "degenerate_periods": list(report.degenerate_periods),
    }


def mc_workflow(
    cfgs: Sequence[McConfig], out_dir: PathLike, threads: Optional[int] = None
) -> Dict[str, Any]:
    """Run one Monte Carlo per config; write per-replication and summary CSVs plus table.txt."""
    out = _out(out_dir)
    reports = []
    files: List[Path] = []
    for cfg in cfgs:
        report = run_mc(cfg, threads=threads)
        reports.append(report)
        spec = cfg.spec
        tag = f"N{spec.n_units}_T{spec.n_periods}"
        files.append(write_table(out / f"mc_replications_{tag}.csv", report.per_replication))
    summary = pd.concat([r.summary_frame() for r in reports], ignore_index=True)
    files.append(write_table(out / "mc_summary.csv", summary))
    table = format_table(reports)
    table_path = out / "table.txt"
    table_path.write_text(table + "\n", encoding="utf-8")
    files.append(table_path)
    return {
        "files": [str(f) for f in files],
        "table": table,
        "n_failed": sum(r.n_failed for r in reports),
        "interrupted": any(r.interrupted for r in reports),
    }


def read_intraday_file(path: PathLike) -> List[IntradayDay]:
    """One asset's file: headerless rows `date,r_1,...,r_M` (row lengths may differ)."""
    path = Path(path)
    days = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells:
                continue
            date, values = cells[0], cells[1:]
            try:
                returns = np.array([float(v) for v in values])
            except ValueError as e:
                raise PanelParseError(str(e), path=str(path), row=lineno) from e
            try:
                days.append(IntradayDay(returns=returns, asset=path.stem, date=date))
            except DataValidationError as e:
                raise PanelParseError(str(e), path=str(path), row=lineno) from e
    return days


def read_intraday_dir(directory: PathLike) -> Dict[str, List[IntradayDay]]:
    """Every *.csv file in a directory, keyed by file stem, in sorted order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"intraday directory not found: {directory}")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataValidationError(f"no *.csv files in {directory}")
    return {f.stem: read_intraday_file(f) for f in files}


def jumps_workflow(
    input_dir: PathLike,
    out_dir: PathLike,
    level: float,
    with_volatility: bool = True,
    threads: Optional[int] = None,
) -> Dict[str, Any]:
    """Jump-test every asset-day; write y.csv/x.csv for `fit` plus statistics and labels."""
    out = _out(out_dir)
    jump_panel = build_jump_panel(read_intraday_dir(input_dir), level, threads=threads)
    files = save_panel(jump_panel.to_panel(with_volatility), out)
    files += [
        write_matrix(out / "jump_stats.csv", jump_panel.stats),
        write_matrix(out / "realized_vol.csv", jump_panel.volatility),
        write_table(out / "assets.csv", pd.DataFrame({"asset": jump_panel.assets})),
        write_table(out / "dates.csv", pd.DataFrame({"date": jump_panel.dates})),
    ]
    return {
        "files": [str(f) for f in files],
        "n_assets": len(jump_panel.assets),
        "n_days": len(jump_panel.dates),
        "jump_rate": jump_panel.jump_rate(),
    }


def read_dated_table(path: PathLike) -> pd.DataFrame:
    """CSV with a `date` column first; returns a frame indexed by date as strings."""
    path = Path(path)
    frame = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
    if "date" not in frame.columns:
        raise PanelParseError("missing 'date' column", path=str(path))
    frame = frame.set_index("date")
    values = frame.to_numpy(dtype=float, na_value=np.nan)
    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise PanelParseError(
            "missing or non-finite value", path=str(path), row=int(row) + 2, column=int(col) + 2
        )
    return frame


def _aligned_inputs(
    returns_path: PathLike, ff5_path: PathLike, subtract_rf: bool
) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    returns = read_dated_table(returns_path)
    ff5 = read_dated_table(ff5_path)
    missing = [c for c in FF5_COLUMNS if c not in ff5.columns]
    if missing:
        raise PanelParseError(f"missing factor column(s) {missing}", path=str(ff5_path))
    if list(returns.index) != list(ff5.index):
        raise DataValidationError(
            f"dates of {returns_path} and {ff5_path} do not match row for row"
        )
    if subtract_rf:
        if "RF" not in ff5.columns:
            raise PanelParseError("missing 'RF' column for --subtract-rf", path=str(ff5_path))
        returns = returns.sub(ff5["RF"], axis=0)
    return returns.to_numpy().T, ff5[list(FF5_COLUMNS)].to_numpy(), list(returns.index)


def price_workflow(
    returns_path: PathLike,
    ff5_path: PathLike,
    factors_path: PathLike,
    out_dir: PathLike,
    window: Optional[int] = None,
    subtract_rf: bool = False,
    adf_lags: Optional[int] = None,
) -> Dict[str, Any]:
    """Pricing comparison and factor ADF table; writes r2, grs, canonical, adf (and ev) CSVs."""
    out = _out(out_dir)
    returns, ff5, dates = _aligned_inputs(returns_path, ff5_path, subtract_rf)
    factors = read_matrix(factors_path, n_rows=len(dates))
    report = price(returns, ff5, factors, window=window)

    files = [
        write_table(out / "r2.csv", report.r2_frame()),
        write_table(out / "grs.csv", report.grs_frame()),
        write_table(
            out / "canonical.csv",
            pd.DataFrame(
                {"j": np.arange(1, report.canonical_corr.size + 1), "corr": report.canonical_corr}
            ),
        ),
        write_table(out / "r2_summary.csv", pd.DataFrame([r2_increment_summary(report)])),
        write_table(out / "adf.csv", adf_table(factors, adf_lags)),
    ]
    if report.explained_variation is not None:
        ev = report.explained_variation.copy()
        ev.insert(0, "end_date", [dates[s - 1] for s in ev["stop"]])
        files.append(write_table(out / "explained_variation.csv", ev))
    return {
        "files": [str(f) for f in files],
        "grs_base": report.grs_base.statistic,
        "grs_augmented": report.grs_augmented.statistic,
        "canonical_corr": [float(c) for c in report.canonical_corr],
        "r2_increment": r2_increment_summary(report),
    }
