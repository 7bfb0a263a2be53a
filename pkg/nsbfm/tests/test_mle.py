"""Tests for the alternating maximum-likelihood estimator."""

import math
from typing import Tuple

import numpy as np
import pytest

from nsbfm.linkfn import LinkKind, cell_loglik
from nsbfm.mle import (
    EstimationConfig,
    common_component,
    fit,
    index_matrix,
    initial_params,
    loglik,
    normalize,
    normalized_coefficients,
    update_factor,
    update_factors,
    update_unit,
    update_units,
)
from nsbfm.models import ModelParams, Panel
from nsbfm.validation import ConfigError, DataValidationError, NormalizationError


def _grid_argmax(objective, low=-10.0, high=10.0, step=1e-4):
    grid = np.arange(low, high + step / 2, step)
    values = objective(grid)
    return grid[int(np.argmax(values))]


class TestEstimationConfig:
    """Tests for EstimationConfig validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tolerance": 0.0},
            {"max_outer_iterations": 0},
            {"max_inner_newton_steps": 0},
            {"ridge_floor": -1.0},
            {"n_restarts": 0},
        ],
    )
    def test_rejects_invalid_values(self, kwargs):
        """Test that out-of-range settings raise ConfigError."""
        with pytest.raises(ConfigError):
            EstimationConfig(n_factors=1, **kwargs)

    def test_with_factors_keeps_other_settings(self):
        """Test that with_factors only changes r."""
        cfg = EstimationConfig(n_factors=1, tolerance=1e-6, n_restarts=3)
        other = cfg.with_factors(4)
        assert other.n_factors == 4
        assert (other.tolerance, other.n_restarts) == (1e-6, 3)


class TestLoglik:
    """Tests for the panel log-likelihood."""

    def test_zero_index(self):
        """Test that z = 0 everywhere gives N T log(0.5)."""
        panel = Panel.without_covariates(np.array([[1, 0, 1], [0, 0, 1]]))
        params = ModelParams(b=np.zeros((2, 0)), lam=np.zeros((2, 1)), f=np.zeros((3, 1)))
        assert loglik(panel, params, LinkKind.LOGIT) == pytest.approx(6 * math.log(0.5))

    def test_extreme_index_is_finite(self):
        """Test that z = -800 with y = 0 contributes about zero without overflow."""
        panel = Panel.without_covariates(np.array([[0]]))
        params = ModelParams(b=np.zeros((1, 0)), lam=np.array([[1.0]]), f=np.array([[-800.0]]))
        value = loglik(panel, params, LinkKind.LOGIT)
        assert math.isfinite(value)
        assert value == pytest.approx(0.0, abs=1e-300)

    def test_dimension_mismatch(self, tiny_panel):
        """Test that params of the wrong size are rejected."""
        params = ModelParams(b=np.zeros((3, 1)), lam=np.zeros((3, 1)), f=np.zeros((2, 1)))
        with pytest.raises(DataValidationError, match="do not match"):
            loglik(tiny_panel, params, LinkKind.LOGIT)

    def test_index_matrix(self, tiny_panel, toy_params):
        """Test that the fitted index is beta'x + lambda'f."""
        z = index_matrix(tiny_panel, toy_params)
        expected = (
            toy_params.b[:, 0][:, None] * tiny_panel.x[:, :, 0]
            + toy_params.lam[:, 0][:, None] * toy_params.f[:, 0][None, :]
        )
        np.testing.assert_allclose(z, expected)
        np.testing.assert_allclose(common_component(toy_params), toy_params.lam @ toy_params.f.T)


class TestUpdateFactor:
    """Tests for the per-period factor update."""

    def _problem(self, y):
        x = np.array([[[0.1]], [[-0.2]], [[0.0]]])
        panel = Panel(y=np.array(y).reshape(3, 1), x=x)
        params = ModelParams(
            b=np.ones((3, 1)), lam=np.array([[1.0], [-1.0], [2.0]]), f=np.zeros((1, 1))
        )
        return panel, params

    def test_matches_grid_search(self):
        """Test the one-dimensional maximizer against a fine grid."""
        panel, params = self._problem([1, 1, 0])
        cfg = EstimationConfig(n_factors=1)
        f_new = update_factor(panel, params, 0, LinkKind.LOGIT, cfg)

        offsets = np.array([0.1, -0.2, 0.0])
        lam = np.array([1.0, -1.0, 2.0])
        y = np.array([1, 1, 0])

        def objective(grid):
            z = offsets[None, :] + grid[:, None] * lam[None, :]
            return np.sum(cell_loglik(y[None, :], z, LinkKind.LOGIT), axis=1)

        assert f_new[0] == pytest.approx(_grid_argmax(objective), abs=1e-3)

    def test_fixed_point(self):
        """Test that restarting at the optimum returns the same value."""
        panel, params = self._problem([1, 1, 0])
        cfg = EstimationConfig(n_factors=1)
        first = update_factor(panel, params, 0, LinkKind.PROBIT, cfg)
        at_opt = ModelParams(b=params.b, lam=params.lam, f=first[None, :])
        again = update_factor(panel, at_opt, 0, LinkKind.PROBIT, cfg)
        np.testing.assert_allclose(again, first, atol=1e-10)

    def test_all_ones_hits_cap_without_losing_objective(self):
        """Test that an unbounded period stops at the cap with a better objective."""
        panel = Panel.without_covariates(np.ones((3, 1)))
        params = ModelParams(b=np.zeros((3, 0)), lam=np.ones((3, 1)), f=np.zeros((1, 1)))
        cfg = EstimationConfig(n_factors=1, tolerance=1e-30, max_inner_newton_steps=50)
        f_new, diag = update_factor(panel, params, 0, LinkKind.LOGIT, cfg, with_diagnostics=True)

        moved = ModelParams(b=params.b, lam=params.lam, f=f_new[None, :])
        assert f_new[0] > 0
        assert loglik(panel, moved, "logit") >= loglik(panel, params, "logit")
        assert diag.non_interior_indices == (0,)

    def test_zero_loadings_leave_factor_unchanged(self):
        """Test that a period with zero score keeps its input and counts as converged."""
        panel = Panel.without_covariates(np.array([[1, 0], [0, 1]]))
        params = ModelParams(b=np.zeros((2, 0)), lam=np.zeros((2, 1)), f=np.array([[0.3], [0.7]]))
        value, diag = update_factor(
            panel, params, 1, LinkKind.LOGIT, EstimationConfig(n_factors=1), with_diagnostics=True
        )
        assert value[0] == 0.7
        assert bool(diag.converged[0])
        assert diag.degenerate_indices == ()

    def test_singular_after_accepted_step_restores_input(self, monkeypatch):
        """Test that a period flagged singular on its second step keeps its input value."""
        from nsbfm import mle as mle_module

        solve = mle_module._solve_ridged
        calls = []

        def singular_from_second_call(fisher, score, ridge_floor):
            calls.append(1)
            directions, singular = solve(fisher, score, ridge_floor)
            if len(calls) > 1:
                singular = np.ones_like(singular)
            return directions, singular

        monkeypatch.setattr(mle_module, "_solve_ridged", singular_from_second_call)
        panel, params = self._problem([1, 1, 0])
        value, diag = update_factor(
            panel, params, 0, LinkKind.LOGIT, EstimationConfig(n_factors=1), with_diagnostics=True
        )
        assert len(calls) == 2
        assert diag.steps[0] == 1
        assert diag.degenerate_indices == (0,)
        assert value[0] == 0.0
        assert diag.objective[0] == pytest.approx(loglik(panel, params, LinkKind.LOGIT))

    def test_out_of_range_period(self, tiny_panel, toy_params):
        """Test that a bad period index is rejected."""
        with pytest.raises(DataValidationError):
            update_factor(tiny_panel, toy_params, 5, LinkKind.LOGIT, EstimationConfig(n_factors=1))


class TestUpdateUnit:
    """Tests for the per-unit coefficient update."""

    def test_matches_grid_search(self):
        """Test the one-loading maximizer against a fine grid."""
        f = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([[0, 0, 1, 1]])
        panel = Panel.without_covariates(y)
        params = ModelParams(b=np.zeros((1, 0)), lam=np.zeros((1, 1)), f=f)
        alpha = update_unit(panel, params, 0, LinkKind.LOGIT, EstimationConfig(n_factors=1))

        def objective(grid):
            z = grid[:, None] * f[:, 0][None, :]
            return np.sum(cell_loglik(y, z, LinkKind.LOGIT), axis=1)

        assert alpha[0] == pytest.approx(_grid_argmax(objective), abs=1e-3)

    def test_separated_unit_is_flagged(self):
        """Test that perfect separation stops at the index bound and is flagged."""
        f = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        panel = Panel.without_covariates(np.array([[0, 0, 1, 1]]))
        params = ModelParams(b=np.zeros((1, 0)), lam=np.zeros((1, 1)), f=f)
        cfg = EstimationConfig(n_factors=1, tolerance=1e-30)
        alpha, diag = update_unit(panel, params, 0, LinkKind.LOGIT, cfg, with_diagnostics=True)

        assert alpha[0] > 10
        assert np.max(np.abs(alpha[0] * f)) <= 50.0 + 1e-9
        assert diag.non_interior_indices == (0,)

    def test_noise_unit_improves_on_zero(self, rng):
        """Test that coin-flip outcomes give a small alpha and no loss of objective."""
        t = 200
        x = rng.normal(size=(1, t, 1))
        f = rng.normal(size=(t, 1))
        y = rng.integers(0, 2, size=(1, t))
        panel = Panel(y=y, x=x)
        params = ModelParams(b=np.zeros((1, 1)), lam=np.zeros((1, 1)), f=f)
        alpha = update_unit(panel, params, 0, LinkKind.PROBIT, EstimationConfig(n_factors=1))

        fitted = ModelParams(b=alpha[None, :1], lam=alpha[None, 1:], f=f)
        assert np.linalg.norm(alpha) < 0.5
        assert loglik(panel, fitted, "probit") >= loglik(panel, params, "probit")


class TestBatchUpdates:
    """Tests for the vectorised half-iterations."""

    def test_batch_matches_single_updates(self, small_sim):
        """Test that update_factors equals update_factor period by period."""
        panel = small_sim.panel
        cfg = EstimationConfig(n_factors=2)
        params = initial_params(panel, 2, LinkKind.LOGIT)
        batch = update_factors(panel, params, LinkKind.LOGIT, cfg)
        for t in (0, 7, panel.n_periods - 1):
            single = update_factor(panel, params, t, LinkKind.LOGIT, cfg)
            np.testing.assert_allclose(batch.values[t], single, rtol=1e-9, atol=1e-9)

    def test_unit_half_iteration_does_not_lower_objective(self, small_sim):
        """Test that every unit's objective is at least its starting value."""
        panel = small_sim.panel
        cfg = EstimationConfig(n_factors=2)
        params = initial_params(panel, 2, LinkKind.PROBIT)
        before = np.sum(cell_loglik(panel.y, params.index(panel.x), "probit"), axis=1)
        result = update_units(panel, params, LinkKind.PROBIT, cfg)
        assert result.values.shape == (panel.n_units, 4 + 2)
        assert np.all(result.objective >= before - 1e-9)


class TestNormalize:
    """Tests for the rotation to the identification constraints."""

    def test_one_factor_closed_form(self):
        """Test the hand-computed r = 1 case."""
        lam_hat, f_hat = normalize(np.array([[3.0], [4.0]]), np.array([[1.0], [2.0]]))
        np.testing.assert_allclose(f_hat[:, 0], [2 / math.sqrt(5), 4 / math.sqrt(5)])
        np.testing.assert_allclose(lam_hat[:, 0], [3 * math.sqrt(5) / 2, 2 * math.sqrt(5)])
        np.testing.assert_allclose(lam_hat @ f_hat.T, [[3.0, 6.0], [4.0, 8.0]])

    def test_random_inputs_keep_common_component(self, rng):
        """Test the constraints and the reconstruction identity for r = 3."""
        lam = rng.normal(size=(20, 3))
        f = rng.normal(size=(30, 3)) * 5
        lam_hat, f_hat = normalize(lam, f)

        target = lam @ f.T
        assert np.max(np.abs(lam_hat @ f_hat.T - target)) <= 1e-10 * np.max(np.abs(target))
        np.testing.assert_allclose(f_hat.T @ f_hat / 30**2, np.eye(3), atol=1e-8)
        gram = lam_hat.T @ lam_hat / 20
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) <= 1e-8 * np.trace(gram)
        assert np.all(np.diff(np.diag(gram)) <= 0)

    def test_already_normalized_is_fixed_up_to_sign(self):
        """Test that inputs meeting the constraints come back unchanged up to sign."""
        t, n = 4, 3
        f = t * np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        lam = np.array([[3.0, 0.0], [0.0, 1.0], [0.0, 0.0]]) * math.sqrt(n)
        lam_hat, f_hat = normalize(lam, f)
        np.testing.assert_allclose(np.abs(lam_hat), np.abs(lam), atol=1e-12)
        np.testing.assert_allclose(np.abs(f_hat), np.abs(f), atol=1e-12)

    def test_sign_rule(self, rng):
        """Test that the largest-magnitude loading of each column is positive."""
        lam_hat, _ = normalize(-rng.normal(size=(10, 2)), rng.normal(size=(15, 2)))
        pivots = np.argmax(np.abs(lam_hat), axis=0)
        assert np.all(lam_hat[pivots, [0, 1]] > 0)

    def test_rank_deficient_factors(self):
        """Test that collinear factor columns are rejected."""
        f = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
        with pytest.raises(NormalizationError, match="fewer than 2"):
            normalize(np.ones((3, 2)), f)


class TestFit:
    """Tests for the full alternation."""

    def test_trace_is_monotone_and_constraints_hold(self, factor_panel):
        """Test the likelihood trace and the identification constraints."""
        result = fit(factor_panel, LinkKind.LOGIT, EstimationConfig(n_factors=1))
        trace = np.asarray(result.loglik_trace)
        assert np.all(np.diff(trace) >= 0)
        assert result.n_iterations >= 1

        f, lam = result.params.f, result.params.lam
        assert float((f.T @ f)[0, 0]) / factor_panel.n_periods**2 == pytest.approx(1.0, abs=1e-8)
        assert result.sigma_hat[0] == pytest.approx(np.mean(lam[:, 0] ** 2))
        np.testing.assert_allclose(
            result.zhat, result.params.index(factor_panel.x), rtol=0, atol=1e-12
        )

    def test_two_factors_sigma_non_increasing(self, small_sim):
        """Test sigma_hat ordering and the factor Gram constraint with r = 2."""
        result = fit(small_sim.panel, LinkKind.LOGIT, EstimationConfig(n_factors=2))
        assert result.sigma_hat.shape == (2,)
        assert result.sigma_hat[0] >= result.sigma_hat[1]
        f = result.params.f
        np.testing.assert_allclose(f.T @ f / small_sim.panel.n_periods**2, np.eye(2), atol=1e-8)

    def test_restarts_never_worse(self, factor_panel):
        """Test that extra restarts keep the best final objective."""
        single = fit(factor_panel, LinkKind.LOGIT, EstimationConfig(n_factors=1))
        multi = fit(factor_panel, LinkKind.LOGIT, EstimationConfig(n_factors=1, n_restarts=3))
        assert multi.loglik >= single.loglik

    def test_covariates_only_model(self, small_sim):
        """Test that r = 0 fits the covariate part alone."""
        result = fit(small_sim.panel, LinkKind.LOGIT, EstimationConfig(n_factors=0))
        assert result.params.lam.shape == (small_sim.panel.n_units, 0)
        assert result.sigma_hat.shape == (0,)
        assert np.all(np.diff(result.loglik_trace) >= 0)

    def test_empty_model(self):
        """Test that q = 0 and r = 0 is a configuration error."""
        panel = Panel.without_covariates(np.array([[1, 0], [0, 1]]))
        with pytest.raises(ConfigError):
            fit(panel, LinkKind.LOGIT, EstimationConfig(n_factors=0))

    def test_deterministic(self, factor_panel):
        """Test that two fits with the same config are identical."""
        cfg = EstimationConfig(n_factors=1, n_restarts=2, seed=3)
        a = fit(factor_panel, LinkKind.PROBIT, cfg)
        b = fit(factor_panel, LinkKind.PROBIT, cfg)
        np.testing.assert_array_equal(a.zhat, b.zhat)
        assert a.loglik_trace == b.loglik_trace


class TestNormalizedCoefficients:
    """Tests for the alpha direction estimator."""

    def test_unit_norm_rows_and_zero_rows(self):
        """Test that rows are scaled to unit length and zero rows stay zero."""
        params = ModelParams(
            b=np.array([[3.0], [0.0]]), lam=np.array([[4.0], [0.0]]), f=np.ones((2, 1))
        )
        out = normalized_coefficients(params)
        np.testing.assert_allclose(out[0], [0.6, 0.8])
        np.testing.assert_array_equal(out[1], [0.0, 0.0])


def _box_oracle(y: np.ndarray, n_starts: int, seed: int) -> Tuple[float, np.ndarray]:
    """Best joint logit log-likelihood of a rank-one index over the box [-3, 3].

    Returns:
        (log-likelihood, common component lambda f') of the best start
    """
    from scipy.optimize import minimize
    from scipy.special import expit

    n, t = y.shape

    def negative(theta):
        lam, f = theta[:n], theta[n:]
        z = np.outer(lam, f)
        resid = y - expit(z)
        value = -float(np.sum(cell_loglik(y, z, LinkKind.LOGIT)))
        grad = -np.concatenate([resid @ f, resid.T @ lam])
        return value, grad

    rng = np.random.default_rng(seed)
    best, best_cc = -np.inf, np.zeros((n, t))
    for _ in range(n_starts):
        start = rng.uniform(-3.0, 3.0, size=n + t)
        res = minimize(
            negative,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=[(-3.0, 3.0)] * (n + t),
            options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 5000},
        )
        if -float(res.fun) > best:
            best, best_cc = -float(res.fun), np.outer(res.x[:n], res.x[n:])
    return best, best_cc


class TestFitOracle:
    """Compare fits on micro-panels with brute-force optimization."""

    @staticmethod
    def _micro_panel(seed: int) -> Panel:
        rng = np.random.default_rng(1000 + seed)
        while True:
            z = np.outer(rng.normal(0.0, 1.5, 4), rng.normal(0.0, 1.5, 4))
            y = (rng.random((4, 4)) < 1.0 / (1.0 + np.exp(-z))).astype(int)
            if 0 < y.sum() < y.size:
                return Panel.without_covariates(y)

    def test_not_worse_than_truth(self, small_sim):
        """Test that the fit's objective is at least the objective at the generating values."""
        r = small_sim.truth.lam.shape[1]
        result = fit(small_sim.panel, LinkKind.LOGIT, EstimationConfig(n_factors=r, n_restarts=3))
        assert result.loglik >= loglik(small_sim.panel, small_sim.truth, LinkKind.LOGIT)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_box_optimum(self, seed):
        """Test that the fit reaches the best bounded joint optimum and its common component."""
        panel = self._micro_panel(seed)
        cfg = EstimationConfig(n_factors=1, n_restarts=5, tolerance=1e-12)
        result = fit(panel, LinkKind.LOGIT, cfg)
        oracle, oracle_cc = _box_oracle(panel.y.astype(float), n_starts=20, seed=seed)
        assert result.loglik >= oracle - 1e-3

        # Common components are comparable only when the fit has a balanced rescaling inside
        # the box and a well-curved optimum
        cc = result.params.common_component()
        lam, f = np.abs(result.params.lam), np.abs(result.params.f)
        inside = np.sqrt(lam.max() * f.max()) <= 3.0 and np.abs(cc).max() <= 4.0
        if inside and not result.non_interior_units and not result.non_interior_periods:
            assert np.max(np.abs(cc - oracle_cc)) <= 0.05
