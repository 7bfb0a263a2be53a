"""Alternating maximum likelihood for binary factor models.

The log-likelihood sum_it l(y_it, beta_i'x_it + lambda_i'f_t) is maximized by alternating
two families of small problems:

    factor step:  for every period t, maximize over f_t with (B, Lambda) fixed
    unit step:    for every unit i, maximize over alpha_i = (beta_i', lambda_i')' with F fixed

Each family is solved for all blocks at once (Jacobi within a half-iteration) by damped
Fisher scoring. The step direction solves (sum K g g' + ridge I) d = sum M (y - Psi) g,
and steps are halved until the block objective does not decrease. After the alternation the
factors and loadings are rotated so that F'F/T^2 = I and Lambda'Lambda/N is diagonal with
non-increasing entries.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from nsbfm.config import (
    DEFAULT_MAX_INNER_STEPS,
    DEFAULT_MAX_OUTER_ITERATIONS,
    DEFAULT_N_RESTARTS,
    DEFAULT_RIDGE_FLOOR,
    DEFAULT_SEED,
    DEFAULT_TOLERANCE,
    INDEX_BOUNDS,
    MAX_STEP_HALVINGS,
    RIDGE_CEILING,
    RIDGE_GROWTH,
)
from nsbfm.dgp import make_rng
from nsbfm.linkfn import LinkKind, cell_loglik, k_kernel, score_weight
from nsbfm.logging_config import get_logger, log_event
from nsbfm.models import FitResult, ModelParams, Panel
from nsbfm.timing import timer
from nsbfm.validation import ConfigError, DataValidationError, NormalizationError

__all__ = [
    "EstimationConfig",
    "BlockUpdate",
    "loglik",
    "update_factor",
    "update_unit",
    "update_factors",
    "update_units",
    "initial_params",
    "normalize",
    "fit",
    "common_component",
    "index_matrix",
    "normalized_coefficients",
]

logger = get_logger("mle")

# Stream id for restart perturbations (simulation uses 0-4)
_RESTART_STREAM = 5

# Factor paths whose Gram eigenvalues fall below this share of the largest are rank deficient
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class EstimationConfig:
    """Settings for one fit.

    tolerance is per cell: the outer loop stops once |L_new - L_last| <= tolerance * N * T.
    ridge_floor is relative to trace/dim of each Fisher block.
    """

    n_factors: int
    tolerance: float = DEFAULT_TOLERANCE
    max_outer_iterations: int = DEFAULT_MAX_OUTER_ITERATIONS
    max_inner_newton_steps: int = DEFAULT_MAX_INNER_STEPS
    ridge_floor: float = DEFAULT_RIDGE_FLOOR
    n_restarts: int = DEFAULT_N_RESTARTS
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.n_factors < 0:
            raise ConfigError(f"n_factors must be >= 0, got {self.n_factors}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_outer_iterations < 1 or self.max_inner_newton_steps < 1:
            raise ConfigError("iteration caps must be >= 1")
        if not self.ridge_floor >= 0:
            raise ConfigError(f"ridge_floor must be >= 0, got {self.ridge_floor}")
        if self.n_restarts < 1:
            raise ConfigError(f"n_restarts must be >= 1, got {self.n_restarts}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def with_factors(self, n_factors: int) -> "EstimationConfig":
        return replace(self, n_factors=n_factors)


@dataclass(frozen=True)
class BlockUpdate:
    """Result of Fisher scoring over a family of blocks (periods or units).

    values[b] is the new parameter vector of block b; the flags are boolean masks.
    """

    values: np.ndarray
    objective: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray
    non_interior: np.ndarray
    steps: np.ndarray

    @property
    def degenerate_indices(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.degenerate))

    @property
    def non_interior_indices(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.non_interior))


# =============================================================================
# Objective
# =============================================================================


def index_matrix(panel: Panel, params: ModelParams) -> np.ndarray:
    """Fitted single index z_it for every cell."""
    params.check_compatible(panel)
    return params.index(panel.x)


def common_component(params: ModelParams) -> np.ndarray:
    """Lambda F', invariant to rotations of the factor space."""
    return params.common_component()


def loglik(panel: Panel, params: ModelParams, kind: LinkKind) -> float:
    """Panel log-likelihood sum_it [y log Psi(z) + (1 - y) log(1 - Psi(z))].

    Raises:
        DataValidationError: If params do not match the panel.
    """
    z = index_matrix(panel, params)
    return float(np.sum(cell_loglik(panel.y, z, kind)))


def normalized_coefficients(params: ModelParams) -> np.ndarray:
    """Directions alpha_i / ||alpha_i||; zero rows stay zero."""
    alpha = params.alpha
    norms = np.linalg.norm(alpha, axis=1, keepdims=True)
    return np.divide(alpha, norms, out=np.zeros_like(alpha), where=norms > 0)


# =============================================================================
# Damped Fisher scoring over a batch of blocks
# =============================================================================


def _ridge_schedule(scale: float, floor: float) -> List[float]:
    start = floor * scale
    schedule = [start]
    ridge = max(start, 1e-12 * scale)
    while ridge * RIDGE_GROWTH <= RIDGE_CEILING * scale * (1 + 1e-12):
        ridge *= RIDGE_GROWTH
        schedule.append(ridge)
    return schedule


def _solve_ridged(
    fisher: np.ndarray, score: np.ndarray, ridge_floor: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve (fisher + ridge I) d = score for every block.

    Returns:
        (directions, singular mask). Singular blocks get a zero direction.
    """
    n_blocks, dim, _ = fisher.shape
    directions = np.zeros((n_blocks, dim))
    scale = np.trace(fisher, axis1=1, axis2=2) / dim
    singular = ~(np.isfinite(scale) & (scale > 0))
    ok = np.flatnonzero(~singular)
    if ok.size == 0:
        return directions, singular

    eye = np.eye(dim)
    system = fisher[ok] + (ridge_floor * scale[ok])[:, None, None] * eye
    try:
        np.linalg.cholesky(system)
        directions[ok] = np.linalg.solve(system, score[ok][:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        # Escalate the ridge block by block
        for b in ok:
            for ridge in _ridge_schedule(scale[b], ridge_floor):
                a = fisher[b] + ridge * eye
                try:
                    np.linalg.cholesky(a)
                except np.linalg.LinAlgError:
                    continue
                directions[b] = np.linalg.solve(a, score[b])
                break
            else:
                singular[b] = True

    bad = ~np.all(np.isfinite(directions), axis=1)
    singular |= bad
    directions[bad] = 0.0
    return directions, singular


def _fisher_scoring(
    design: np.ndarray,
    offset: np.ndarray,
    outcomes: np.ndarray,
    theta0: np.ndarray,
    kind: LinkKind,
    cfg: EstimationConfig,
) -> BlockUpdate:
    """Maximize sum_c l(y_bc, offset_bc + design_bc' theta_b) over theta_b for every block b.

    Args:
        design: (B, C, p) regressors per block and cell
        offset: (B, C) fixed part of the index
        outcomes: (B, C) binary outcomes
        theta0: (B, p) starting values
    """
    n_blocks, n_cells, dim = design.shape
    theta = np.array(theta0, dtype=float, copy=True)
    z_bound = INDEX_BOUNDS[kind.value]
    threshold = cfg.tolerance * max(n_cells, 1)

    z = offset + (design @ theta[:, :, None])[:, :, 0]
    obj = np.sum(cell_loglik(outcomes, z, kind), axis=1)
    entry_theta, entry_z, entry_obj = theta.copy(), z.copy(), obj.copy()

    active = np.ones(n_blocks, dtype=bool)
    converged = np.zeros(n_blocks, dtype=bool)
    degenerate = np.zeros(n_blocks, dtype=bool)
    steps = np.zeros(n_blocks, dtype=np.int64)

    for _ in range(cfg.max_inner_newton_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        d_blk, z_blk, y_blk = design[idx], z[idx], outcomes[idx]

        w = score_weight(y_blk, z_blk, kind)
        score = (np.swapaxes(d_blk, 1, 2) @ w[:, :, None])[:, :, 0]
        done = np.max(np.abs(score), axis=1, initial=0.0) <= threshold
        converged[idx[done]] = True
        active[idx[done]] = False

        keep = ~done
        idx, d_blk, z_blk, y_blk, score = (
            idx[keep], d_blk[keep], z_blk[keep], y_blk[keep], score[keep]
        )
        if idx.size == 0:
            break

        k = k_kernel(z_blk, kind)
        fisher = np.swapaxes(d_blk * k[:, :, None], 1, 2) @ d_blk
        direction, singular = _solve_ridged(fisher, score, cfg.ridge_floor)
        degenerate[idx[singular]] = True
        active[idx[singular]] = False

        keep = ~singular
        idx, d_blk, z_blk, y_blk, direction = (
            idx[keep], d_blk[keep], z_blk[keep], y_blk[keep], direction[keep]
        )
        if idx.size == 0:
            break

        dz = (d_blk @ direction[:, :, None])[:, :, 0]
        base = obj[idx]
        bound = np.maximum(z_bound, np.max(np.abs(z_blk), axis=1))
        step = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        new_z = z_blk.copy()
        new_obj = base.copy()

        for _ in range(MAX_STEP_HALVINGS):
            pending = np.flatnonzero(~accepted)
            if pending.size == 0:
                break
            cand_z = z_blk[pending] + step[pending, None] * dz[pending]
            cand_obj = np.sum(cell_loglik(y_blk[pending], cand_z, kind), axis=1)
            good = (cand_obj >= base[pending]) & (
                np.max(np.abs(cand_z), axis=1) <= bound[pending]
            )
            hit = pending[good]
            new_z[hit] = cand_z[good]
            new_obj[hit] = cand_obj[good]
            accepted[hit] = True
            step[pending[~good]] *= 0.5

        moved = idx[accepted]
        theta[moved] += step[accepted, None] * direction[accepted]
        z[moved] = new_z[accepted]
        obj[moved] = new_obj[accepted]
        steps[moved] += 1

        # No representable improvement left: treat as converged
        flat = accepted & (new_obj <= base)
        converged[idx[flat]] = True
        active[idx[flat | ~accepted]] = False

    # Singular blocks report their entry value, whatever steps came before
    theta[degenerate] = entry_theta[degenerate]
    z[degenerate] = entry_z[degenerate]
    obj[degenerate] = entry_obj[degenerate]

    non_interior = active.copy()
    if n_cells:
        non_interior |= np.max(np.abs(z), axis=1) >= 0.99 * z_bound

    return BlockUpdate(
        values=theta,
        objective=obj,
        converged=converged,
        degenerate=degenerate,
        non_interior=non_interior & ~degenerate,
        steps=steps,
    )


# =============================================================================
# Block updates
# =============================================================================


def _empty_update(values: np.ndarray) -> BlockUpdate:
    n = values.shape[0]
    return BlockUpdate(
        values=values.copy(),
        objective=np.zeros(n),
        converged=np.ones(n, dtype=bool),
        degenerate=np.zeros(n, dtype=bool),
        non_interior=np.zeros(n, dtype=bool),
        steps=np.zeros(n, dtype=np.int64),
    )


def _factor_problem(panel: Panel, params: ModelParams, periods: np.ndarray):
    n_units, r = params.lam.shape
    design = np.broadcast_to(params.lam, (periods.size, n_units, r))
    offset = params.covariate_part(panel.x).T[periods]
    outcomes = panel.y.T[periods]
    return design, offset, outcomes, params.f[periods]


def _unit_problem(panel: Panel, params: ModelParams, units: np.ndarray):
    n_periods, r = params.f.shape
    x = panel.x[units]
    f = np.broadcast_to(params.f, (units.size, n_periods, r))
    design = np.concatenate([x, f], axis=2)
    offset = np.zeros((units.size, n_periods))
    return design, offset, panel.y[units], params.alpha[units]


def update_factors(
    panel: Panel, params: ModelParams, kind: LinkKind, cfg: EstimationConfig
) -> BlockUpdate:
    """Update every f_t given (B, Lambda); values has shape (T, r)."""
    params.check_compatible(panel)
    kind = LinkKind.parse(kind)
    if params.n_factors == 0:
        return _empty_update(params.f)
    periods = np.arange(panel.n_periods)
    return _fisher_scoring(*_factor_problem(panel, params, periods), kind, cfg)


def update_units(
    panel: Panel, params: ModelParams, kind: LinkKind, cfg: EstimationConfig
) -> BlockUpdate:
    """Update every alpha_i = (beta_i', lambda_i')' given F; values has shape (N, q + r)."""
    params.check_compatible(panel)
    kind = LinkKind.parse(kind)
    units = np.arange(panel.n_units)
    return _fisher_scoring(*_unit_problem(panel, params, units), kind, cfg)


def update_factor(
    panel: Panel,
    params: ModelParams,
    t: int,
    kind: LinkKind,
    cfg: EstimationConfig,
    with_diagnostics: bool = False,
):
    """Maximize the period-t objective over f_t with (B, Lambda) fixed.

    Returns:
        The new r-vector, or (vector, BlockUpdate) when with_diagnostics is set. A degenerate
        period returns its input unchanged.
    """
    params.check_compatible(panel)
    kind = LinkKind.parse(kind)
    if not 0 <= t < panel.n_periods:
        raise DataValidationError(f"period {t} out of range [0, {panel.n_periods})")
    if params.n_factors == 0:
        result = _empty_update(params.f[[t]])
    else:
        result = _fisher_scoring(*_factor_problem(panel, params, np.array([t])), kind, cfg)
    value = result.values[0]
    return (value, result) if with_diagnostics else value


def update_unit(
    panel: Panel,
    params: ModelParams,
    i: int,
    kind: LinkKind,
    cfg: EstimationConfig,
    with_diagnostics: bool = False,
):
    """Maximize unit i's objective over alpha_i with F fixed.

    Returns:
        The new (q + r)-vector, or (vector, BlockUpdate) when with_diagnostics is set.
    """
    params.check_compatible(panel)
    kind = LinkKind.parse(kind)
    if not 0 <= i < panel.n_units:
        raise DataValidationError(f"unit {i} out of range [0, {panel.n_units})")
    result = _fisher_scoring(*_unit_problem(panel, params, np.array([i])), kind, cfg)
    value = result.values[0]
    return (value, result) if with_diagnostics else value


# =============================================================================
# Initialization and normalization
# =============================================================================


def _spectral_start(panel: Panel, n_factors: int) -> Tuple[np.ndarray, np.ndarray]:
    n_units, n_periods = panel.y.shape
    if n_factors == 0:
        return np.zeros((n_units, 0)), np.zeros((n_periods, 0))
    u, s, vt = np.linalg.svd(2.0 * panel.y - 1.0, full_matrices=False)
    r = min(n_factors, s.size)
    lam = np.zeros((n_units, n_factors))
    f = np.zeros((n_periods, n_factors))
    lam[:, :r] = u[:, :r] * s[:r] / n_periods
    f[:, :r] = vt[:r].T * n_periods
    return lam, f


def _coefficient_start(panel: Panel, base_index: np.ndarray, kind: LinkKind) -> np.ndarray:
    """One covariate at a time, take a damped score step from zero for every unit."""
    n_units, _, n_cov = panel.x.shape
    b = np.zeros((n_units, n_cov))
    z = base_index.copy()
    obj = np.sum(cell_loglik(panel.y, z, kind), axis=1)
    for j in range(n_cov):
        xj = panel.x[:, :, j]
        w = score_weight(panel.y, z, kind)
        info = np.sum(k_kernel(z, kind) * xj * xj, axis=1)
        step = np.divide(np.sum(w * xj, axis=1), info, out=np.zeros(n_units), where=info > 0)
        for _ in range(MAX_STEP_HALVINGS):
            cand = z + step[:, None] * xj
            cand_obj = np.sum(cell_loglik(panel.y, cand, kind), axis=1)
            worse = cand_obj < obj
            if not worse.any():
                break
            step[worse] *= 0.5
        step[np.sum(cell_loglik(panel.y, z + step[:, None] * xj, kind), axis=1) < obj] = 0.0
        b[:, j] = step
        z = z + step[:, None] * xj
        obj = np.sum(cell_loglik(panel.y, z, kind), axis=1)
    return b


def initial_params(
    panel: Panel, n_factors: int, kind: LinkKind, seed: int = 0, restart: int = 0
) -> ModelParams:
    """Starting values for one run of the alternation.

    Restart 0 is the spectral warm start: the top singular vectors of 2y - 1 scaled so that
    F'F/T^2 = I, then per-unit coefficient steps. Later restarts perturb it with Gaussian
    noise drawn from the (seed, restart) stream.
    """
    kind = LinkKind.parse(kind)
    lam, f = _spectral_start(panel, n_factors)
    b = _coefficient_start(panel, lam @ f.T, kind)

    if restart > 0:
        rng = make_rng(seed, restart, _RESTART_STREAM)

        def jitter(a: np.ndarray) -> np.ndarray:
            if a.size == 0:
                return a
            scale = 0.5 * (np.sqrt(np.mean(a * a)) + 1e-3)
            return a + scale * rng.standard_normal(a.shape)

        b, lam, f = jitter(b), jitter(lam), jitter(f)

    return ModelParams(b=b, lam=lam, f=f)


def _sym_sqrt(mat: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    return w, (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T, v


def normalize(lambda_star: np.ndarray, f_star: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rotate (Lambda*, F*) so that F'F/T^2 = I and Lambda'Lambda/N is diagonal, descending.

    The common component Lambda F' is unchanged. Each column is signed so that the
    largest-magnitude entry of Lambda in that column is positive.

    Raises:
        NormalizationError: If F* is rank deficient (fit with fewer factors).
    """
    lam = np.asarray(lambda_star, dtype=float)
    f = np.asarray(f_star, dtype=float)
    n_units, r = lam.shape
    n_periods = f.shape[0]
    if f.shape[1] != r:
        raise DataValidationError(f"Lambda has {r} columns but F has {f.shape[1]}")
    if r == 0:
        return lam.copy(), f.copy()

    s_f = f.T @ f / n_periods**2
    s_lam = lam.T @ lam / n_units
    w, root, v = _sym_sqrt(s_f)
    if not np.all(np.isfinite(w)) or w.min() <= _RANK_RTOL * max(w.max(), 0.0):
        raise NormalizationError(
            f"factor path is rank deficient (Gram eigenvalues {np.array2string(w, precision=3)}); "
            f"fit with fewer than {r} factors"
        )
    inv_root = (v / np.sqrt(w)) @ v.T

    inner = root @ s_lam @ root
    d, q = np.linalg.eigh(0.5 * (inner + inner.T))
    order = np.argsort(d)[::-1]
    q = q[:, order]

    lam_hat = lam @ root @ q
    f_hat = f @ inv_root @ q

    pivots = np.argmax(np.abs(lam_hat), axis=0)
    signs = np.where(lam_hat[pivots, np.arange(r)] < 0, -1.0, 1.0)
    log_event(
        "normalize",
        {"sigma": np.sort(d)[::-1], "min_factor_gram_eigenvalue": float(w.min())},
        level=logging.DEBUG,
        logger_name="mle",
    )
    return lam_hat * signs, f_hat * signs


# =============================================================================
# Full fit
# =============================================================================


@dataclass
class _RunState:
    params: ModelParams
    trace: List[float]
    n_iterations: int
    converged: bool
    factor_update: Optional[BlockUpdate]
    unit_update: Optional[BlockUpdate]


def _alternate(
    panel: Panel, start: ModelParams, kind: LinkKind, cfg: EstimationConfig, restart: int
) -> _RunState:
    n_cov = panel.n_covariates
    n_cells = panel.n_units * panel.n_periods
    params = start
    last = loglik(panel, params, kind)
    state = _RunState(params, [last], 0, False, None, None)

    for iteration in range(1, cfg.max_outer_iterations + 1):
        with timer("factor_update"):
            fu = update_factors(panel, params, kind, cfg)
        candidate = ModelParams(b=params.b, lam=params.lam, f=fu.values)
        with timer("unit_update"):
            uu = update_units(panel, candidate, kind, cfg)
        candidate = ModelParams(b=uu.values[:, :n_cov], lam=uu.values[:, n_cov:], f=fu.values)
        new = loglik(panel, candidate, kind)

        log_event(
            "fit_iteration",
            {
                "restart": restart,
                "iteration": iteration,
                "loglik": new,
                "degenerate_periods": int(fu.degenerate.sum()),
                "degenerate_units": int(uu.degenerate.sum()),
            },
            level=logging.DEBUG,
            logger_name="mle",
        )

        if new < last:
            # Rounding in the block sums; keep the previous iterate
            state.converged = abs(new - last) <= cfg.tolerance * n_cells
            break

        params = candidate
        state.params, state.factor_update, state.unit_update = params, fu, uu
        state.trace.append(new)
        state.n_iterations = iteration
        if abs(new - last) <= cfg.tolerance * n_cells:
            state.converged = True
            break
        last = new

    return state


def fit(panel: Panel, kind: LinkKind, cfg: EstimationConfig) -> FitResult:
    """Estimate (B, Lambda, F) by alternating maximum likelihood.

    Runs cfg.n_restarts alternations (spectral start plus perturbed restarts), keeps the one
    with the highest final log-likelihood and normalizes it.

    Raises:
        ConfigError: If the model has neither covariates nor factors.
        NormalizationError: If the estimated factor path is rank deficient.
    """
    kind = LinkKind.parse(kind)
    r = cfg.n_factors
    if panel.n_covariates + r < 1:
        raise ConfigError("model needs at least one covariate or one factor (q + r >= 1)")

    log_event(
        "fit_start",
        {
            "message": f"Fitting N={panel.n_units} T={panel.n_periods} q={panel.n_covariates} "
            f"r={r} ({kind.value})",
            "n_units": panel.n_units,
            "n_periods": panel.n_periods,
            "n_covariates": panel.n_covariates,
            "n_factors": r,
            "link": kind.value,
            "n_restarts": cfg.n_restarts,
        },
        logger_name="mle",
    )

    best: Optional[_RunState] = None
    best_restart = 0
    for restart in range(cfg.n_restarts):
        start = initial_params(panel, r, kind, seed=cfg.seed, restart=restart)
        state = _alternate(panel, start, kind, cfg, restart)
        log_event(
            "fit_restart_done",
            {
                "restart": restart,
                "loglik": state.trace[-1],
                "iterations": state.n_iterations,
                "converged": state.converged,
            },
            level=logging.DEBUG,
            logger_name="mle",
        )
        if best is None or state.trace[-1] > best.trace[-1]:
            best, best_restart = state, restart

    assert best is not None
    with timer("normalize"):
        lam_hat, f_hat = normalize(best.params.lam, best.params.f)
    params = ModelParams(b=best.params.b, lam=lam_hat, f=f_hat)
    sigma_hat = np.diag(lam_hat.T @ lam_hat) / panel.n_units

    fu, uu = best.factor_update, best.unit_update
    result = FitResult(
        params=params,
        zhat=params.index(panel.x),
        loglik_trace=tuple(best.trace),
        n_iterations=best.n_iterations,
        converged=best.converged,
        sigma_hat=sigma_hat,
        link=kind,
        degenerate_units=uu.degenerate_indices if uu else (),
        degenerate_periods=fu.degenerate_indices if fu else (),
        non_interior_units=uu.non_interior_indices if uu else (),
        non_interior_periods=fu.non_interior_indices if fu else (),
        restart_index=best_restart,
    )

    if result.degenerate_periods or result.degenerate_units:
        logger.warning(
            f"{len(result.degenerate_periods)} degenerate period(s) and "
            f"{len(result.degenerate_units)} degenerate unit(s) kept at their previous values"
        )
    if not result.converged:
        logger.warning(f"Fit stopped after {result.n_iterations} iterations without converging")

    log_event(
        "fit_done",
        {
            "message": f"Fit done: loglik={result.loglik:.6f} after {result.n_iterations} "
            f"iteration(s)",
            "loglik": result.loglik,
            "iterations": result.n_iterations,
            "converged": result.converged,
            "restart_index": best_restart,
            "sigma_hat": sigma_hat,
        },
        logger_name="mle",
    )
    return result
