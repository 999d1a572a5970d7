"""Scalar fraction penalty ``rho_a(t) = a|t| / (a|t| + 1)`` and its proximal map.

The proximal map minimises ``(beta - gamma)**2 + lam * rho_a(beta)`` over
``beta``. It has a dead zone ``|gamma| <= t_star`` and, outside it, a closed
form obtained from the trigonometric solution of a cubic.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError

__all__ = [
    "FractionParams",
    "Regime",
    "ThresholdSpec",
    "rho",
    "penalty",
    "threshold_values",
    "g_lambda",
    "prox",
    "prox_array",
]


def _a_of(p):
    return p.a if isinstance(p, FractionParams) else float(p)


@dataclass(frozen=True)
class FractionParams:
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"fraction parameter a must be finite and > 0, got {self.a!r}")


class Regime(enum.Enum):
    SMALL_LAMBDA = "small"
    LARGE_LAMBDA = "large"


@dataclass(frozen=True)
class ThresholdSpec:
    """Resolved parameters of one thresholding step.

    The effective regularisation weight is ``lam * mu``. ``regime`` records
    which threshold branch applies; it is always derived from
    ``lam <= 1 / (a**2 * mu)`` and is checked on construction.
    Use :meth:`resolve` rather than building one by hand.
    """

    a: float
    lam: float
    mu: float
    t_star: float
    regime: Regime

    def __post_init__(self):
        FractionParams(self.a)
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        expected = _regime(self.a, self.lam, self.mu)
        if self.regime is not expected:
            raise ValueError(f"regime {self.regime} inconsistent with lam={self.lam}, "
                             f"mu={self.mu}, a={self.a} (expected {expected})")
        if not self.t_star >= 0:
            raise ValueError(f"t_star must be >= 0, got {self.t_star!r}")

    @classmethod
    def resolve(cls, a, lam, mu=1.0):
        a = _a_of(a)
        regime = _regime(a, lam, mu)
        lm = lam * mu
        if regime is Regime.SMALL_LAMBDA:
            t_star = lm * a / 2.0
        else:
            t_star = math.sqrt(lm) - 1.0 / (2.0 * a)
        return cls(a=a, lam=float(lam), mu=float(mu), t_star=float(t_star), regime=regime)

    @property
    def lam_mu(self):
        return self.lam * self.mu


def _regime(a, lam, mu):
    return Regime.SMALL_LAMBDA if lam <= 1.0 / (a * a * mu) else Regime.LARGE_LAMBDA


def rho(t, p):
    """Fraction penalty, elementwise for arrays."""
    a = _a_of(p)
    at = a * np.abs(t)
    out = at / (at + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def penalty(values, p):
    """Sum of ``rho`` over ``values`` (singular values or vector entries)."""
    return float(np.sum(rho(np.asarray(values, dtype=np.float64), p)))


def threshold_values(lam, p):
    """The three candidate thresholds ``(t1, t2, t3)``; ``t1 <= t3 <= t2``."""
    a = _a_of(p)
    t1 = (np.cbrt(27.0 / 8.0 * lam * a * a) - 1.0) / a
    t2 = lam * a / 2.0
    t3 = math.sqrt(lam) - 1.0 / (2.0 * a)
    return float(t1), float(t2), float(t3)


def g_lambda(gamma, lam, p):
    """Nonzero stationary branch of the proximal map.

    Only meaningful for ``|gamma|`` beyond the dead zone; raises
    :class:`DomainError` when the arccos argument is out of range by more than
    rounding noise.
    """
    a = _a_of(p)
    absg = abs(gamma)
    c = 1.0 + a * absg
    arg = 27.0 * lam * a * a / (4.0 * c ** 3) - 1.0
    if arg < -1.0 - _kernels.ARCCOS_TOL or arg > 1.0 + _kernels.ARCCOS_TOL:
        raise DomainError(f"arccos argument {arg!r} outside [-1, 1] for gamma={gamma}, "
                          f"lam={lam}, a={a}")
    phi = math.acos(min(1.0, max(-1.0, arg)))
    val = ((c / 3.0) * (1.0 + 2.0 * math.cos(phi / 3.0 - math.pi / 3.0)) - 1.0) / a
    return math.copysign(val, gamma) if gamma != 0 else 0.0


def prox(gamma, spec):
    if abs(gamma) <= spec.t_star:
        return 0.0
    return g_lambda(gamma, spec.lam_mu, spec.a)


def prox_array(values, spec):
    """Vectorised :func:`prox`; dispatches to the active kernel backend."""
    out, nbad = _kernels.prox_array(values, spec.lam_mu, spec.a, spec.t_star)
    if nbad:
        raise DomainError(f"{nbad} entries hit an invalid arccos argument "
                          f"(lam*mu={spec.lam_mu}, a={spec.a}, t_star={spec.t_star})")
    return out
