"""Link functions and the score/Hessian kernels for logit and probit.

For an index z the kernels are

    M(z) = Psi'(z) / (Psi(z) (1 - Psi(z)))      score weight
    K(z) = M(z) Psi'(z) = M^2 Psi (1 - Psi)     dominant Hessian weight

Logit has M == 1. For probit everything is written in terms of the inverse Mills ratio
h(z) = phi(z) / Phi(-z) = sqrt(2/pi) / erfcx(z / sqrt(2)), which is accurate in both tails:
M(z) = h(z) + h(-z). Log-likelihood terms come from log_expit / log_ndtr and are never
formed as log(psi).

All functions accept scalars or numpy arrays and are pure.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np
from scipy import special

from nsbfm.config import PROB_CLAMP
from nsbfm.validation import LinkDomainError

__all__ = [
    "LinkKind",
    "LinkEval",
    "evaluate",
    "mdot",
    "psi",
    "psidot",
    "m_kernel",
    "k_kernel",
    "log_psi_pair",
    "cell_loglik",
    "score_weight",
]

ArrayLike = Union[float, np.ndarray]

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class LinkKind(str, Enum):
    """Link family for the binary response."""

    LOGIT = "logit"
    PROBIT = "probit"

    @classmethod
    def parse(cls, value: Union[str, "LinkKind"]) -> "LinkKind":
        """Parse 'logit'/'probit' (case-insensitive)."""
        if isinstance(value, LinkKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown link {value!r}; expected one of: {choices}") from None


@dataclass(frozen=True)
class LinkEval:
    """All link quantities at an index value (or array of values).

    psi is clamped to [1e-15, 1 - 1e-15]; psi_var is the unclamped Psi (1 - Psi).
    """

    psi: ArrayLike
    psidot: ArrayLike
    m: ArrayLike
    k: ArrayLike
    mdot: ArrayLike
    loglik0: ArrayLike
    loglik1: ArrayLike
    psi_var: ArrayLike


def _as_index(z: ArrayLike) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise LinkDomainError("link index must be finite")
    return arr


def _unwrap(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


def _inv_mills(z: np.ndarray) -> np.ndarray:
    """h(z) = phi(z) / Phi(-z)."""
    return _SQRT_2_OVER_PI / special.erfcx(z / np.sqrt(2.0))


def log_psi_pair(z: ArrayLike, kind: LinkKind) -> Tuple[ArrayLike, ArrayLike]:
    """Return (log Psi(z), log(1 - Psi(z))), both finite and <= 0."""
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        lp, l1mp = special.log_expit(arr), special.log_expit(-arr)
    else:
        lp, l1mp = special.log_ndtr(arr), special.log_ndtr(-arr)
    return _unwrap(lp, z), _unwrap(l1mp, z)


def psi(z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Success probability, clamped to [1e-15, 1 - 1e-15]."""
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        p = special.expit(arr)
    else:
        p = special.ndtr(arr)
    return _unwrap(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP), z)


def psidot(z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Link density Psi'(z)."""
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        d = np.exp(special.log_expit(arr) + special.log_expit(-arr))
    else:
        d = np.exp(-0.5 * arr * arr - _LOG_SQRT_2PI)
    return _unwrap(d, z)


def m_kernel(z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Score weight M(z); identically 1 for logit."""
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        return _unwrap(np.ones_like(arr), z)
    return _unwrap(_inv_mills(arr) + _inv_mills(-arr), z)


def k_kernel(z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Dominant Hessian weight K(z) = M(z) Psi'(z) > 0."""
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        k = np.exp(special.log_expit(arr) + special.log_expit(-arr))
    else:
        phi = np.exp(-0.5 * arr * arr - _LOG_SQRT_2PI)
        k = (_inv_mills(arr) + _inv_mills(-arr)) * phi
    return _unwrap(k, z)


def mdot(z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Derivative of M; exactly 0 for logit.

    For probit, with h the inverse Mills ratio and h'(z) = h(z)(h(z) - z):
    M'(z) = h(z)(h(z) - z) - h(-z)(h(-z) + z).

    Raises:
        LinkDomainError: If z is not finite.
    """
    arr = _as_index(z)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        return _unwrap(np.zeros_like(arr), z)
    hp, hm = _inv_mills(arr), _inv_mills(-arr)
    return _unwrap(hp * (hp - arr) - hm * (hm + arr), z)


def evaluate(z: ArrayLike, kind: LinkKind) -> LinkEval:
    """Evaluate every link quantity at z.

    Args:
        z: Finite index value or array of values
        kind: Link family

    Returns:
        LinkEval with fields of the same shape as z (floats for scalar input)

    Raises:
        LinkDomainError: If any z is NaN or infinite.
    """
    kind = LinkKind.parse(kind)
    arr = _as_index(z)

    if kind is LinkKind.LOGIT:
        lp, l1mp = special.log_expit(arr), special.log_expit(-arr)
        var = np.exp(lp + l1mp)
        p = special.expit(arr)
        d = var
        m = np.ones_like(arr)
        k = var
        md = np.zeros_like(arr)
    else:
        lp, l1mp = special.log_ndtr(arr), special.log_ndtr(-arr)
        var = np.exp(lp + l1mp)
        p = special.ndtr(arr)
        d = np.exp(-0.5 * arr * arr - _LOG_SQRT_2PI)
        hp, hm = _inv_mills(arr), _inv_mills(-arr)
        m = hp + hm
        k = m * d
        md = hp * (hp - arr) - hm * (hm + arr)

    return LinkEval(
        psi=_unwrap(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP), z),
        psidot=_unwrap(d, z),
        m=_unwrap(m, z),
        k=_unwrap(k, z),
        mdot=_unwrap(md, z),
        loglik0=_unwrap(l1mp, z),
        loglik1=_unwrap(lp, z),
        psi_var=_unwrap(var, z),
    )


def cell_loglik(y: ArrayLike, z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Per-cell log-likelihood y log Psi(z) + (1 - y) log(1 - Psi(z))."""
    lp, l1mp = log_psi_pair(z, kind)
    y_arr = np.asarray(y)
    out = np.where(y_arr == 1, lp, l1mp)
    return float(out) if np.ndim(out) == 0 else out


def score_weight(y: ArrayLike, z: ArrayLike, kind: LinkKind) -> ArrayLike:
    """Score contribution M(z)(y - Psi(z)) without forming 1 - Psi by subtraction.

    Logit: y - Psi. Probit: h(-z) where y = 1 and -h(z) where y = 0.
    """
    arr = _as_index(z)
    y_arr = np.asarray(y)
    if LinkKind.parse(kind) is LinkKind.LOGIT:
        w = np.where(y_arr == 1, special.expit(-arr), -special.expit(arr))
    else:
        w = np.where(y_arr == 1, _inv_mills(-arr), -_inv_mills(arr))
    return float(w) if np.ndim(w) == 0 else w
