"""Command-line interface: simulate, fit, rank, infer, mc, jumps and price.

Options can come from a plain key=value file (--config); flags given on the command line
override file values. Every run writes manifest.json and resolved_config.txt to --out, so
that it can be repeated with `--config <out>/resolved_config.txt`.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error, 3 numerical
failure.
"""

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from nsbfm import __version__
from nsbfm.config import (
    DEFAULT_COVERAGE_LEVEL,
    DEFAULT_JUMP_LEVEL,
    DEFAULT_K_MAX,
    DEFAULT_MAX_INNER_STEPS,
    DEFAULT_MAX_OUTER_ITERATIONS,
    DEFAULT_N_RESTARTS,
    DEFAULT_RIDGE_FLOOR,
    DEFAULT_SEED,
    DEFAULT_TOLERANCE,
    default_log_level,
    load_config_file,
    normalize_key,
    resolve_threads,
)
from nsbfm.dgp import DgpCase, DgpSpec
from nsbfm.linkfn import LinkKind
from nsbfm.logging_config import (
    current_run_id,
    get_logger,
    json_default,
    log_event,
    setup_logging,
)
from nsbfm.mle import EstimationConfig
from nsbfm.montecarlo import McConfig
from nsbfm.rankselect import RankRegime
from nsbfm.shutdown import get_shutdown_handler
from nsbfm.timing import get_timings, reset_timings
from nsbfm.validation import ConfigError, DataValidationError, NumericalError
from nsbfm.workflows import (
    fit_workflow,
    infer_workflow,
    jumps_workflow,
    mc_workflow,
    price_workflow,
    rank_workflow,
    simulate_workflow,
)

__all__ = [
    "main",
    "build_parser",
    "parse_args",
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "EXIT_NUMERICAL",
]

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# Options that are not estimation inputs and stay out of resolved_config.txt
_NOT_RECORDED = {"help", "config", "command", "handler"}


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting on usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


# =============================================================================
# Parser
# =============================================================================


def _common_options() -> argparse.ArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file supplying any option of the subcommand")
    common.add_argument("--out", default="nsbfm_out", help="Output directory (default: nsbfm_out)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="RNG seed (default: 0)")
    common.add_argument(
        "--threads",
        default=None,
        help="Worker threads, an integer or 'auto' (default: $NSBFM_THREADS or auto)",
    )
    common.add_argument(
        "-v", "--verbose", action="store_true", help="Enable verbose/debug logging output"
    )
    return common


def _input_options() -> argparse.ArgumentParser:
    inputs = CliArgumentParser(add_help=False)
    inputs.add_argument("--y", dest="y", help="Outcome CSV (N rows x T columns of 0/1)")
    inputs.add_argument("--x", dest="x", help="Covariate CSV (long format unit,period,cov_1..)")
    return inputs


def _link_option() -> argparse.ArgumentParser:
    link = CliArgumentParser(add_help=False)
    link.add_argument(
        "--link", choices=[k.value for k in LinkKind], default="logit", help="Link function"
    )
    return link


def _estimation_options(with_factors: bool = True) -> argparse.ArgumentParser:
    est = CliArgumentParser(add_help=False)
    if with_factors:
        est.add_argument("--factors", type=int, default=1, help="Number of factors r (default: 1)")
    est.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE, help="Per-cell tolerance")
    est.add_argument(
        "--max-iter", type=int, default=DEFAULT_MAX_OUTER_ITERATIONS, help="Outer iteration cap"
    )
    est.add_argument(
        "--inner-steps",
        type=int,
        default=DEFAULT_MAX_INNER_STEPS,
        help="Fisher-scoring steps per block update",
    )
    est.add_argument(
        "--restarts", type=int, default=DEFAULT_N_RESTARTS, help="Number of starting points"
    )
    est.add_argument(
        "--ridge", type=float, default=DEFAULT_RIDGE_FLOOR, help="Relative ridge floor"
    )
    return est


def _design_options() -> argparse.ArgumentParser:
    design = CliArgumentParser(add_help=False)
    design.add_argument("--case", type=int, choices=[1, 2], default=1, help="Simulation design")
    design.add_argument("--N", dest="n_units", type=int, default=100, help="Number of units")
    design.add_argument("--T", dest="n_periods", type=int, default=100, help="Number of periods")
    return design


def build_parser() -> Tuple[CliArgumentParser, Dict[str, CliArgumentParser]]:
    """Build the top-level parser; also returns the subparsers by command name."""
    parser = CliArgumentParser(
        prog="nsbfm",
        description="Binary factor models with nonstationary covariates and factors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a cointegrated logit panel and fit it with two factors
  python -m nsbfm.cli simulate --case 2 --N 200 --T 200 --out sim
  python -m nsbfm.cli fit --y sim/y.csv --x sim/x.csv --factors 2 --out fit

  # Select the number of factors with up to 6 candidates
  python -m nsbfm.cli rank --y sim/y.csv --x sim/x.csv --kmax 6 --regime coint --out rank

  # Monte Carlo block over N = T in {100, 300}
  python -m nsbfm.cli mc --case 2 --grid 100,300 --M 50 --out mc
        """,
    )
    parser.add_argument("--version", action="version", version=f"nsbfm {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    common, inputs, link = _common_options(), _input_options(), _link_option()
    commands: Dict[str, CliArgumentParser] = {}

    p = sub.add_parser(
        "simulate", parents=[common, link, _design_options()], help="Simulate a panel with truth"
    )
    p.add_argument("--replication", type=int, default=0, help="Replication index (RNG key)")
    p.set_defaults(handler=_run_simulate)
    commands["simulate"] = p

    p = sub.add_parser(
        "fit", parents=[common, inputs, link, _estimation_options()], help="Fit the model"
    )
    p.set_defaults(handler=_run_fit)
    commands["fit"] = p

    p = sub.add_parser(
        "rank",
        parents=[common, inputs, link, _estimation_options(with_factors=False)],
        help="Select the number of factors",
    )
    p.add_argument("--kmax", type=int, default=DEFAULT_K_MAX, help="Factors in the large fit")
    p.add_argument(
        "--regime", choices=[r.value for r in RankRegime], default="nonstat", help="Threshold"
    )
    p.add_argument("--block", type=int, default=None, help="Also select on period blocks")
    p.add_argument("--refit", action="store_true", help="Re-fit at the selected count")
    p.set_defaults(handler=_run_rank)
    commands["rank"] = p

    p = sub.add_parser("infer", parents=[common, inputs, link], help="Plug-in inference")
    p.add_argument("--fit-dir", help="Directory written by `fit`")
    p.add_argument(
        "--level", type=float, default=DEFAULT_COVERAGE_LEVEL, help="Interval coverage"
    )
    p.add_argument("--full", action="store_true", help="Use the full Hessian")
    p.set_defaults(handler=_run_infer)
    commands["infer"] = p

    p = sub.add_parser(
        "mc",
        parents=[common, link, _design_options(), _estimation_options(with_factors=False)],
        help="Monte Carlo replications",
    )
    p.add_argument("--M", dest="n_replications", type=int, default=10, help="Replications")
    p.add_argument(
        "--kmax", type=int, default=DEFAULT_K_MAX, help="Rank-selection candidates (0 skips)"
    )
    p.add_argument(
        "--regime",
        choices=[r.value for r in RankRegime],
        default=None,
        help="Rank threshold (default: follows --case)",
    )
    p.add_argument("--grid", default=None, help="Comma-separated N = T sizes, e.g. 100,300,500")
    p.set_defaults(handler=_run_mc)
    commands["mc"] = p

    p = sub.add_parser("jumps", parents=[common], help="Jump indicators from intraday returns")
    p.add_argument("--input", help="Directory with one CSV per asset (date,r_1,...,r_M rows)")
    p.add_argument("--level", type=float, default=DEFAULT_JUMP_LEVEL, help="Test level")
    p.add_argument(
        "--no-volatility", action="store_true", help="Do not write the volatility covariate"
    )
    p.set_defaults(handler=_run_jumps)
    commands["jumps"] = p

    p = sub.add_parser("price", parents=[common], help="Asset-pricing evaluation of factors")
    p.add_argument("--returns", help="Excess-return CSV (date column plus one column per asset)")
    p.add_argument("--ff5", help="Factor CSV (date,MKT,SMB,HML,RMW,CMA,RF)")
    p.add_argument("--fit-dir", help="Directory written by `fit` (its F.csv is used)")
    p.add_argument("--window", type=int, default=None, help="Explained-variation window")
    p.add_argument("--subtract-rf", action="store_true", help="Subtract RF from raw returns")
    p.add_argument("--lags", type=int, default=None, help="ADF lag count (default: rule of thumb)")
    p.set_defaults(handler=_run_price)
    commands["price"] = p

    return parser, commands


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _apply_config_file(sub: argparse.ArgumentParser, values: Dict[str, str]) -> None:
    """Install config-file values as subparser defaults (flags still override them)."""
    by_name: Dict[str, argparse.Action] = {}
    for action in sub._actions:
        if action.dest in _NOT_RECORDED:
            continue
        by_name[normalize_key(action.dest)] = action
        for option in action.option_strings:
            by_name[normalize_key(option)] = action

    defaults: Dict[str, Any] = {}
    for key, text in values.items():
        action = by_name.get(key)
        if action is None:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            value: Any = _parse_bool(text)
        elif action.type is not None:
            try:
                value = action.type(text)
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {text!r}") from e
        else:
            value = text
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"{key} must be one of {list(action.choices)}, got {value!r}")
        defaults[action.dest] = value
    sub.set_defaults(**defaults)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse argv, merging a --config file underneath the explicit flags."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        _apply_config_file(commands[args.command], load_config_file(args.config))
        args = parser.parse_args(argv)
    return args


def _resolved_options(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED}


def _write_resolved_config(out: Path, options: Dict[str, Any]) -> Path:
    path = out / "resolved_config.txt"
    lines = [f"# nsbfm {__version__}"]
    for key, value in options.items():
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# =============================================================================
# Subcommand handlers
# =============================================================================


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise ConfigError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _estimation_config(args: argparse.Namespace, n_factors: int) -> EstimationConfig:
    return EstimationConfig(
        n_factors=n_factors,
        tolerance=args.tol,
        max_outer_iterations=args.max_iter,
        max_inner_newton_steps=args.inner_steps,
        ridge_floor=args.ridge,
        n_restarts=args.restarts,
        seed=args.seed,
    )


def _run_simulate(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    spec = DgpSpec(
        case=DgpCase.parse(args.case),
        n_units=args.n_units,
        n_periods=args.n_periods,
        link=LinkKind.parse(args.link),
        seed=args.seed,
        replication=args.replication,
    )
    return simulate_workflow(spec, args.out)


def _run_fit(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    _require(args, "y")
    cfg = _estimation_config(args, args.factors)
    return fit_workflow(args.y, args.x, LinkKind.parse(args.link), cfg, args.out)


def _run_rank(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    _require(args, "y")
    cfg = _estimation_config(args, args.kmax)
    summary = rank_workflow(
        args.y,
        args.x,
        LinkKind.parse(args.link),
        args.kmax,
        RankRegime.parse(args.regime),
        cfg,
        args.out,
        block=args.block,
        refit=args.refit,
    )
    print(summary.pop("table"))
    return summary


def _run_infer(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    _require(args, "y", "fit_dir")
    return infer_workflow(
        args.y, args.x, args.fit_dir, LinkKind.parse(args.link), args.out, args.level, args.full
    )


def _grid_sizes(text: str) -> List[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--grid expects comma-separated integers, got {text!r}") from e
    if not sizes:
        raise ConfigError("--grid is empty")
    return sizes


def _run_mc(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    case = DgpCase.parse(args.case)
    link = LinkKind.parse(args.link)
    sizes = (
        [(n, n) for n in _grid_sizes(args.grid)] if args.grid else [(args.n_units, args.n_periods)]
    )
    estimation = _estimation_config(args, 2)
    cfgs = [
        McConfig(
            spec=DgpSpec(case=case, n_units=n, n_periods=t, link=link, seed=args.seed),
            n_replications=args.n_replications,
            estimation=estimation,
            k_max=args.kmax,
            regime=RankRegime.parse(args.regime) if args.regime else None,
        )
        for n, t in sizes
    ]
    summary = mc_workflow(cfgs, args.out, threads=threads)
    print(summary.pop("table"))
    return summary


def _run_jumps(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    _require(args, "input")
    return jumps_workflow(
        args.input, args.out, args.level, with_volatility=not args.no_volatility, threads=threads
    )


def _run_price(args: argparse.Namespace, threads: int) -> Dict[str, Any]:
    _require(args, "returns", "ff5", "fit_dir")
    return price_workflow(
        args.returns,
        args.ff5,
        Path(args.fit_dir) / "F.csv",
        args.out,
        window=args.window,
        subtract_rf=args.subtract_rf,
        adf_lags=args.lags,
    )


# =============================================================================
# Entry point
# =============================================================================


def _exit_code(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    if isinstance(error, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(error, (DataValidationError, OSError, ValueError)):
        return EXIT_DATA
    raise error


def _write_manifest(out: Path, manifest: Dict[str, Any], options: Dict[str, Any]) -> None:
    """Write manifest.json and resolved_config.txt; failures are logged, not raised."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "manifest.json"
        path.write_text(
            json.dumps(manifest, indent=2, default=json_default) + "\n", encoding="utf-8"
        )
        _write_resolved_config(out, options)
    except OSError as e:
        logger.warning(f"Could not write run manifest to {out}: {e}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    started = time.perf_counter()
    try:
        args = parse_args(argv)
        threads = resolve_threads(args.threads)
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA

    out = Path(args.out)
    level = logging.DEBUG if args.verbose else getattr(logging, default_log_level(), logging.INFO)
    try:
        setup_logging(level=level, log_dir=out / "logs")
    except OSError as e:
        print(f"error: cannot create log directory under {out}: {e}", file=sys.stderr)
        return EXIT_DATA

    reset_timings()
    shutdown_handler = get_shutdown_handler()
    shutdown_handler.reset()
    shutdown_handler.install()

    options = _resolved_options(args)
    options["threads"] = threads
    handler: Callable[[argparse.Namespace, int], Dict[str, Any]] = args.handler
    started_at = datetime.now(timezone.utc).isoformat()
    logger.info(f"nsbfm {args.command} started (output: {out})")

    result: Dict[str, Any] = {}
    error_message: Optional[str] = None
    status = EXIT_OK
    try:
        result = handler(args, threads)
        for key, value in result.items():
            if key != "files":
                print(f"{key}: {value}")
    except KeyboardInterrupt:
        error_message = "interrupted"
        status = 130
    except Exception as e:
        status = _exit_code(e)
        error_message = f"{type(e).__name__}: {e}"
        print(f"error: {e}", file=sys.stderr)
        logger.error(f"{args.command} failed: {error_message}")
    finally:
        shutdown_handler.cleanup()
        shutdown_handler.uninstall()

    wall = time.perf_counter() - started
    manifest = {
        "package": "nsbfm",
        "version": __version__,
        "run_id": current_run_id(),
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "options": options,
        "started_at": started_at,
        "wall_seconds": wall,
        "timings": get_timings(),
        "exit_status": status,
        "error": error_message,
        "result": result,
    }
    _write_manifest(out, manifest, options)
    log_event(
        "run_manifest",
        {
            "message": f"nsbfm {args.command} finished with status {status} in {wall:.2f}s",
            "command": args.command,
            "exit_status": status,
            "wall_seconds": wall,
        },
        logger_name="cli",
    )
    return status


if __name__ == "__main__":
    sys.exit(main())
