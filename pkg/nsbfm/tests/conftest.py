"""Shared fixtures for the nsbfm test suite."""

import numpy as np
import pytest

from nsbfm.dgp import DgpSpec, simulate
from nsbfm.linkfn import LinkKind
from nsbfm.models import ModelParams, Panel
from nsbfm.shutdown import get_shutdown_handler
from nsbfm.timing import reset_timings


@pytest.fixture(autouse=True)
def clean_process_state():
    """Reset the process-wide shutdown flag and timing tracker around each test."""
    get_shutdown_handler().reset()
    reset_timings()
    yield
    get_shutdown_handler().reset()
    reset_timings()


@pytest.fixture
def rng():
    """Deterministic generator for ad-hoc test data."""
    return np.random.default_rng(20240601)


@pytest.fixture
def tiny_panel():
    """2 x 2 panel with one covariate, both outcomes mixed within units."""
    y = np.array([[1, 0], [0, 1]])
    x = np.array([[[0.5], [-0.5]], [[1.0], [0.0]]])
    return Panel(y=y, x=x)


@pytest.fixture
def factor_panel(rng):
    """Pure-factor logit panel (N=30, T=40) with one well-separated factor."""
    n, t = 30, 40
    lam = rng.normal(0.0, 1.5, size=(n, 1))
    f = np.cumsum(rng.normal(0.0, 0.3, size=(t, 1)), axis=0) + np.linspace(-1.5, 1.5, t)[:, None]
    z = lam @ f.T
    y = (rng.uniform(size=(n, t)) < 1.0 / (1.0 + np.exp(-z))).astype(int)
    return Panel.without_covariates(y)


@pytest.fixture
def small_sim():
    """Case-1 logit simulation small enough for unit tests."""
    return simulate(DgpSpec(case=1, n_units=20, n_periods=25, link=LinkKind.LOGIT, seed=7))


@pytest.fixture
def toy_params():
    """Parameters with one covariate and one factor on a 2 x 2 panel."""
    return ModelParams(
        b=np.array([[0.5], [-0.25]]),
        lam=np.array([[1.0], [0.5]]),
        f=np.array([[0.2], [-0.4]]),
    )
