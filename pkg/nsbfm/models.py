"""Data models for binary panels, factor-model parameters and fitted results."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from nsbfm.linkfn import LinkKind
from nsbfm.validation import DataValidationError, validate_binary, validate_finite

__all__ = ["Panel", "ModelParams", "FitResult"]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Panel:
    """Observed data: binary outcomes y (N x T) and covariates x (N x T x q).

    q = 0 is a pure factor model; x then has shape (N, T, 0).
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.y)
        if y.ndim != 2:
            raise DataValidationError(f"y must be an N x T matrix, got shape {y.shape}")
        n, t = y.shape
        if n < 1 or t < 1:
            raise DataValidationError(f"panel needs N >= 1 and T >= 1, got {n} x {t}")
        y = validate_binary(y, "y")

        x = self.x
        if x is None:
            x = np.zeros((n, t, 0))
        x = validate_finite(x, "x")
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[:2] != (n, t):
            raise DataValidationError(f"x has shape {x.shape}, expected ({n}, {t}, q)")

        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))

    @classmethod
    def without_covariates(cls, y: np.ndarray) -> "Panel":
        y = np.asarray(y)
        return cls(y=y, x=np.zeros(y.shape + (0,)))

    @property
    def n_units(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_periods(self) -> int:
        return int(self.y.shape[1])

    @property
    def n_covariates(self) -> int:
        return int(self.x.shape[2])


@dataclass(frozen=True)
class ModelParams:
    """Coefficients B (N x q), loadings Lambda (N x r) and factor path F (T x r).

    `lam` holds Lambda (`lambda` is reserved in Python).
    """

    b: np.ndarray
    lam: np.ndarray
    f: np.ndarray

    def __post_init__(self) -> None:
        b = validate_finite(self.b, "B")
        lam = validate_finite(self.lam, "Lambda")
        f = validate_finite(self.f, "F")
        if b.ndim != 2 or lam.ndim != 2 or f.ndim != 2:
            raise DataValidationError("B, Lambda and F must be 2-d")
        if b.shape[0] != lam.shape[0]:
            raise DataValidationError(
                f"B has {b.shape[0]} rows but Lambda has {lam.shape[0]}"
            )
        if lam.shape[1] != f.shape[1]:
            raise DataValidationError(
                f"Lambda has {lam.shape[1]} columns but F has {f.shape[1]}"
            )
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "lam", _frozen(lam))
        object.__setattr__(self, "f", _frozen(f))

    @property
    def n_factors(self) -> int:
        return int(self.lam.shape[1])

    @property
    def n_units(self) -> int:
        return int(self.lam.shape[0])

    @property
    def n_periods(self) -> int:
        return int(self.f.shape[0])

    @property
    def n_covariates(self) -> int:
        return int(self.b.shape[1])

    @property
    def alpha(self) -> np.ndarray:
        """Stacked unit coefficients alpha_i = (beta_i', lambda_i')', shape (N, q + r)."""
        return np.hstack([self.b, self.lam])

    def check_compatible(self, panel: Panel) -> None:
        """Raise DataValidationError unless dimensions match the panel."""
        if (
            self.n_units != panel.n_units
            or self.n_periods != panel.n_periods
            or self.n_covariates != panel.n_covariates
        ):
            raise DataValidationError(
                f"params (N={self.n_units}, T={self.n_periods}, q={self.n_covariates}) do not "
                f"match panel (N={panel.n_units}, T={panel.n_periods}, q={panel.n_covariates})"
            )

    def covariate_part(self, x: np.ndarray) -> np.ndarray:
        """beta_i' x_it for every cell, shape (N, T)."""
        return np.einsum("itq,iq->it", x, self.b)

    def common_component(self) -> np.ndarray:
        """Lambda F', shape (N, T)."""
        return self.lam @ self.f.T

    def index(self, x: np.ndarray) -> np.ndarray:
        """Single index z_it = beta_i' x_it + lambda_i' f_t, shape (N, T)."""
        return self.covariate_part(x) + self.common_component()


@dataclass(frozen=True)
class FitResult:
    """Output of the alternating maximum-likelihood fit.

    params are normalized (F'F/T^2 = I, Lambda'Lambda/N diagonal, non-increasing).
    """

    params: ModelParams
    zhat: np.ndarray
    loglik_trace: Tuple[float, ...]
    n_iterations: int
    converged: bool
    sigma_hat: np.ndarray
    link: LinkKind = LinkKind.LOGIT
    degenerate_units: Tuple[int, ...] = ()
    degenerate_periods: Tuple[int, ...] = ()
    non_interior_units: Tuple[int, ...] = ()
    non_interior_periods: Tuple[int, ...] = ()
    restart_index: int = 0
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def loglik(self) -> float:
        """Final objective value."""
        return float(self.loglik_trace[-1]) if self.loglik_trace else float("nan")

    @property
    def n_factors(self) -> int:
        return self.params.n_factors
