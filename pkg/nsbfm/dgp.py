"""Simulated binary panels with integrated covariates and factors.

Two designs, both with q = 4 covariates and r = 2 factors:

    Case 1 (nonstationary index): x_it = x_it-1 + e_it, e_it = 0.1 e_it-1 + 0.1 N(0, I_4),
        beta_i ~ U[0, 1]^4.
    Case 2 (cointegrated index): beta_i = (1, .5, .5, 1)' and x_it is a combination of
        lambda_i(j) f_t(j) chosen so that beta_i' x_it + lambda_i' f_t = beta_i' e_it,
        e_it = 0.1 e_it-1 + N(0, I_4).

In both, f_t = f_t-1 + 0.01 N(0, I_2), lambda_i ~ N(0, diag(2, 1)), and every recursion
starts from zero. Randomness comes from independent Philox streams keyed by
(seed, replication, stream), so a replication never depends on which thread draws it.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Union

import numpy as np
from scipy import signal

from nsbfm.linkfn import LinkKind, psi
from nsbfm.models import ModelParams, Panel
from nsbfm.validation import ConfigError

__all__ = [
    "DgpCase",
    "DgpSpec",
    "SimulatedPanel",
    "simulate",
    "simulate_factors",
    "draw_outcomes",
    "make_rng",
    "CASE2_BETA",
]

# RNG stream ids
STREAM_COVARIATES = 0
STREAM_FACTORS = 1
STREAM_LOADINGS = 2
STREAM_COEFFICIENTS = 3
STREAM_OUTCOMES = 4

N_COVARIATES = 4
N_FACTORS = 2
FACTOR_INNOVATION_SCALE = 0.01
NOISE_AR = 0.1
LOADING_VARIANCES = np.array([2.0, 1.0])
CASE2_BETA = np.array([1.0, 0.5, 0.5, 1.0])


class DgpCase(IntEnum):
    NONSTATIONARY = 1
    COINTEGRATED = 2

    @classmethod
    def parse(cls, value: Union[int, str, "DgpCase"]) -> "DgpCase":
        """Accept 1/2, 'nonstat'/'coint' or the member names."""
        if isinstance(value, DgpCase):
            return value
        text = str(value).strip().lower()
        aliases = {
            "1": cls.NONSTATIONARY,
            "nonstat": cls.NONSTATIONARY,
            "nonstationary": cls.NONSTATIONARY,
            "2": cls.COINTEGRATED,
            "coint": cls.COINTEGRATED,
            "cointegrated": cls.COINTEGRATED,
        }
        if text not in aliases:
            raise ConfigError(f"unknown case {value!r}; expected 1 or 2")
        return aliases[text]


@dataclass(frozen=True)
class DgpSpec:
    """Simulation design for one replication."""

    case: DgpCase
    n_units: int
    n_periods: int
    link: LinkKind = LinkKind.LOGIT
    seed: int = 0
    replication: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "case", DgpCase.parse(self.case))
        object.__setattr__(self, "link", LinkKind.parse(self.link))
        if self.n_units < 1:
            raise ConfigError(f"N must be >= 1, got {self.n_units}")
        if self.n_periods < 2:
            raise ConfigError(f"T must be >= 2, got {self.n_periods}")
        if self.seed < 0 or self.replication < 0:
            raise ConfigError("seed and replication must be non-negative")

    @property
    def n_covariates(self) -> int:
        return N_COVARIATES

    @property
    def n_factors(self) -> int:
        return N_FACTORS

    def with_replication(self, replication: int) -> "DgpSpec":
        return DgpSpec(
            case=self.case,
            n_units=self.n_units,
            n_periods=self.n_periods,
            link=self.link,
            seed=self.seed,
            replication=replication,
        )


@dataclass(frozen=True)
class SimulatedPanel:
    """A simulated panel with its true parameters, indices and covariate noise path."""

    panel: Panel
    truth: ModelParams
    z_true: np.ndarray
    noise: np.ndarray
    spec: DgpSpec


def make_rng(seed: int, replication: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (seed, replication, stream) key."""
    key = np.random.SeedSequence([seed, replication, stream])
    return np.random.Generator(np.random.Philox(key))


def simulate_factors(
    n_periods: int,
    n_factors: int,
    innovation_scale: float,
    seed: int,
    replication: int = 0,
) -> np.ndarray:
    """Random-walk factor path f_t = f_t-1 + scale * N(0, I_r) with f_0 = 0.

    Returns:
        T x r matrix whose first row is the first innovation.
    """
    if n_periods < 1 or n_factors < 1:
        raise ConfigError(f"need T >= 1 and r >= 1, got T={n_periods}, r={n_factors}")
    if innovation_scale <= 0:
        raise ConfigError(f"innovation scale must be positive, got {innovation_scale}")
    rng = make_rng(seed, replication, STREAM_FACTORS)
    innovations = innovation_scale * rng.standard_normal((n_periods, n_factors))
    return np.cumsum(innovations, axis=0)


def draw_outcomes(
    z: np.ndarray, kind: LinkKind, seed: int, replication: int = 0
) -> np.ndarray:
    """Binary outcomes y = 1{u < Psi(z)} with independent uniforms u."""
    z = np.asarray(z, dtype=float)
    rng = make_rng(seed, replication, STREAM_OUTCOMES)
    u = rng.random(z.shape)
    return (u < psi(z, kind)).astype(np.int8)


def _ar1_noise(innovations: np.ndarray) -> np.ndarray:
    """e_t = 0.1 e_t-1 + innovation_t along axis 1, e_0 = 0."""
    return signal.lfilter([1.0], [1.0, -NOISE_AR], innovations, axis=1)


def _case2_covariates(lam: np.ndarray, f: np.ndarray) -> np.ndarray:
    a = lam[:, None, 0] * f[None, :, 0]
    b = lam[:, None, 1] * f[None, :, 1]
    return np.stack([-0.5 * a - 0.25 * b, -0.5 * a, -0.5 * b, -0.25 * a - 0.5 * b], axis=2)


def simulate(spec: DgpSpec) -> SimulatedPanel:
    """Simulate one panel from the Case 1 or Case 2 design.

    Args:
        spec: Design, size, link and RNG key

    Returns:
        SimulatedPanel with q = 4, r = 2; identical for identical specs
    """
    n, t = spec.n_units, spec.n_periods
    seed, rep = spec.seed, spec.replication

    f = simulate_factors(t, N_FACTORS, FACTOR_INNOVATION_SCALE, seed, rep)
    lam = make_rng(seed, rep, STREAM_LOADINGS).standard_normal((n, N_FACTORS)) * np.sqrt(
        LOADING_VARIANCES
    )
    eps = make_rng(seed, rep, STREAM_COVARIATES).standard_normal((n, t, N_COVARIATES))

    if spec.case is DgpCase.NONSTATIONARY:
        b = make_rng(seed, rep, STREAM_COEFFICIENTS).random((n, N_COVARIATES))
        noise = _ar1_noise(0.1 * eps)
        x = np.cumsum(noise, axis=1)
    else:
        b = np.tile(CASE2_BETA, (n, 1))
        noise = _ar1_noise(eps)
        x = _case2_covariates(lam, f) + noise

    truth = ModelParams(b=b, lam=lam, f=f)
    z_true = truth.index(x)
    y = draw_outcomes(z_true, spec.link, seed, rep)
    return SimulatedPanel(
        panel=Panel(y=y, x=x),
        truth=truth,
        z_true=z_true,
        noise=noise,
        spec=spec,
    )
