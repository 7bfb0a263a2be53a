"""CSV input/output for panels, fitted models and result tables.

File conventions:
    - Outcome matrix: headerless CSV, one row per unit, one column per period, cells 0/1.
    - Covariates: long-format CSV with header `unit,period,cov_1,...,cov_q`, 0-indexed
      unit and period, one row per (unit, period) cell.
    - Fitted matrices: headerless CSV written with 17 significant digits, so reading them
      back with round-trip float parsing reproduces every double exactly.
"""

import csv
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from nsbfm.config import FLOAT_FORMAT
from nsbfm.linkfn import LinkKind
from nsbfm.logging_config import get_logger
from nsbfm.models import FitResult, ModelParams, Panel
from nsbfm.validation import PanelParseError

__all__ = [
    "FIT_FILES",
    "load_panel",
    "save_panel",
    "save_fit",
    "load_fit",
    "save_params",
    "write_matrix",
    "read_matrix",
    "write_table",
    "covariates_to_long",
]

logger = get_logger("panel_io")

PathLike = Union[str, Path]

FIT_FILES = ("B.csv", "Lambda.csv", "F.csv", "zhat.csv", "trace.csv")


def _parse_binary_cell(text: str) -> Optional[int]:
    text = text.strip()
    if text in ("0", "1"):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        return None
    if value == 0.0 or value == 1.0:
        return int(value)
    return None


def _read_outcomes(path: Path) -> np.ndarray:
    rows: List[List[int]] = []
    width: Optional[int] = None
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row_no, row in enumerate(csv.reader(f), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise PanelParseError(
                    f"ragged row: expected {width} columns, found {len(row)}",
                    path=str(path),
                    row=row_no,
                    column=min(len(row), width) + 1,
                )
            parsed = []
            for col_no, cell in enumerate(row, 1):
                value = _parse_binary_cell(cell)
                if value is None:
                    raise PanelParseError(
                        f"outcome cell must be 0 or 1, found {cell.strip()!r}",
                        path=str(path),
                        row=row_no,
                        column=col_no,
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise PanelParseError("outcome file is empty", path=str(path))
    return np.asarray(rows, dtype=np.int8)


def _read_covariates(path: Path, n_units: int, n_periods: int) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip")
    columns = [str(c).strip() for c in frame.columns]
    if len(columns) < 3 or columns[0] != "unit" or columns[1] != "period":
        raise PanelParseError(
            "covariate header must be unit,period,cov_1[,cov_2,...]", path=str(path), row=1
        )
    n_cov = len(columns) - 2

    for col_no, name in enumerate(("unit", "period"), 1):
        values = pd.to_numeric(frame.iloc[:, col_no - 1], errors="coerce").to_numpy()
        bad = ~np.isfinite(values) | (values != np.round(values))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise PanelParseError(
                f"{name} index must be an integer", path=str(path), row=row + 2, column=col_no
            )

    units = frame.iloc[:, 0].to_numpy(dtype=np.int64)
    periods = frame.iloc[:, 1].to_numpy(dtype=np.int64)
    out_of_range = (units < 0) | (units >= n_units) | (periods < 0) | (periods >= n_periods)
    if out_of_range.any():
        row = int(np.flatnonzero(out_of_range)[0])
        column = 1 if not (0 <= units[row] < n_units) else 2
        raise PanelParseError(
            f"(unit {units[row]}, period {periods[row]}) outside the {n_units} x {n_periods} "
            f"outcome grid",
            path=str(path),
            row=row + 2,
            column=column,
        )

    values = frame.iloc[:, 2:].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise PanelParseError(
            "covariate value is missing or not finite", path=str(path), row=row + 2, column=col + 3
        )

    seen = np.zeros((n_units, n_periods), dtype=np.int64)
    np.add.at(seen, (units, periods), 1)
    if (seen > 1).any():
        u, t = (int(v) for v in np.argwhere(seen > 1)[0])
        row = int(np.flatnonzero((units == u) & (periods == t))[1])
        raise PanelParseError(
            f"duplicate covariate row for unit {u}, period {t}", path=str(path), row=row + 2
        )
    if (seen == 0).any():
        u, t = (int(v) for v in np.argwhere(seen == 0)[0])
        raise PanelParseError(f"no covariate row for unit {u}, period {t}", path=str(path))

    x = np.empty((n_units, n_periods, n_cov))
    x[units, periods, :] = values
    return x


def load_panel(outcome_path: PathLike, covariate_path: Optional[PathLike] = None) -> Panel:
    """Load a binary panel from CSV.

    Args:
        outcome_path: Headerless 0/1 matrix, rows = units, columns = periods
        covariate_path: Optional long-format covariates; absent means q = 0

    Returns:
        Validated Panel

    Raises:
        FileNotFoundError: If a file does not exist
        PanelParseError: On ragged rows, non-binary cells, bad or missing covariate rows
    """
    outcome_path = Path(outcome_path)
    y = _read_outcomes(outcome_path)
    n_units, n_periods = y.shape

    if covariate_path is None:
        x = np.zeros((n_units, n_periods, 0))
    else:
        x = _read_covariates(Path(covariate_path), n_units, n_periods)

    logger.info(
        f"Loaded panel {outcome_path.name}: N={n_units}, T={n_periods}, q={x.shape[2]}"
    )
    return Panel(y=y, x=x)


def covariates_to_long(x: np.ndarray) -> pd.DataFrame:
    """Long-format covariate frame (unit, period, cov_1..cov_q) in unit-major order."""
    n_units, n_periods, n_cov = x.shape
    units, periods = np.indices((n_units, n_periods))
    frame = pd.DataFrame({"unit": units.ravel(), "period": periods.ravel()})
    for j in range(n_cov):
        frame[f"cov_{j + 1}"] = x[:, :, j].ravel()
    return frame


def write_matrix(path: PathLike, matrix: np.ndarray) -> Path:
    """Write a 2-d array as headerless CSV with 17 significant digits.

    A matrix with no columns is written as an empty file.
    """
    path = Path(path)
    matrix = np.atleast_2d(np.asarray(matrix))
    try:
        if matrix.size == 0:
            path.write_text("", encoding="utf-8")
        else:
            pd.DataFrame(matrix).to_csv(
                path, header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
            )
    except OSError as e:
        raise OSError(e.errno, f"cannot write {path}: {e.strerror}", str(path)) from e
    return path


def read_matrix(path: PathLike, n_rows: Optional[int] = None) -> np.ndarray:
    """Read a headerless numeric CSV written by `write_matrix`.

    An empty file is a matrix with no columns (`n_rows` rows when given).
    """
    path = Path(path)
    if path.stat().st_size == 0 or not path.read_text(encoding="utf-8").strip():
        return np.zeros((n_rows or 0, 0))
    frame = pd.read_csv(path, header=None, float_precision="round_trip")
    return frame.to_numpy(dtype=float)


def write_table(path: PathLike, frame: pd.DataFrame) -> Path:
    """Write a report table (with header) using the package float format."""
    path = Path(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OSError(e.errno, f"cannot write {path}: {e.strerror}", str(path)) from e
    return path


def _ensure_dir(directory: PathLike) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(
            e.errno, f"cannot create output directory: {e.strerror}", str(directory)
        ) from e
    return directory


def save_panel(panel: Panel, directory: PathLike) -> List[Path]:
    """Write y.csv (and x.csv in long format when q > 0) to a directory."""
    directory = _ensure_dir(directory)
    written = [directory / "y.csv"]
    try:
        pd.DataFrame(panel.y).to_csv(written[0], header=False, index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(e.errno, f"cannot write {written[0]}: {e.strerror}", str(written[0])) from e
    if panel.n_covariates:
        written.append(write_table(directory / "x.csv", covariates_to_long(panel.x)))
    return written


def save_params(params: ModelParams, directory: PathLike, prefix: str = "") -> List[Path]:
    """Write B, Lambda and F matrices with an optional file-name prefix."""
    directory = _ensure_dir(directory)
    return [
        write_matrix(directory / f"{prefix}B.csv", params.b),
        write_matrix(directory / f"{prefix}Lambda.csv", params.lam),
        write_matrix(directory / f"{prefix}F.csv", params.f),
    ]


def save_fit(fit: FitResult, directory: PathLike) -> List[Path]:
    """Write a fit as B.csv, Lambda.csv, F.csv, zhat.csv and trace.csv.

    Raises:
        OSError: If the directory cannot be created or a file cannot be written; the
            message names the path.
    """
    directory = _ensure_dir(directory)
    written = save_params(fit.params, directory)
    written.append(write_matrix(directory / "zhat.csv", fit.zhat))
    trace = pd.DataFrame(
        {
            "iteration": np.arange(len(fit.loglik_trace), dtype=np.int64),
            "loglik": np.asarray(fit.loglik_trace, dtype=float),
        }
    )
    written.append(write_table(directory / "trace.csv", trace))
    logger.debug(f"Saved fit to {directory}")
    return written


def load_fit(directory: PathLike, link: Union[str, LinkKind] = LinkKind.LOGIT) -> FitResult:
    """Read a fit written by `save_fit`.

    Convergence diagnostics are not stored on disk: the loaded result has converged=False
    and a note saying so. sigma_hat is recomputed from Lambda.

    Raises:
        FileNotFoundError: If any of the five files is missing.
    """
    directory = Path(directory)
    missing = [name for name in FIT_FILES if not (directory / name).exists()]
    if missing:
        raise FileNotFoundError(f"{directory}: missing fit file(s) {', '.join(missing)}")

    zhat = read_matrix(directory / "zhat.csv")
    n_units, n_periods = zhat.shape
    b = read_matrix(directory / "B.csv", n_rows=n_units)
    lam = read_matrix(directory / "Lambda.csv", n_rows=n_units)
    f = read_matrix(directory / "F.csv", n_rows=n_periods)
    trace = pd.read_csv(directory / "trace.csv", float_precision="round_trip")

    params = ModelParams(b=b, lam=lam, f=f)
    sigma_hat = np.sort(np.sum(lam * lam, axis=0) / n_units)[::-1]
    return FitResult(
        params=params,
        zhat=zhat,
        loglik_trace=tuple(float(v) for v in trace["loglik"].to_numpy(dtype=float)),
        n_iterations=max(len(trace) - 1, 0),
        converged=False,
        sigma_hat=sigma_hat,
        link=LinkKind.parse(link),
        notes=("loaded from disk; convergence diagnostics not stored",),
    )

