"""Physical parameters, drift and click-rate fields of the monitored qubit.

The qubit state is confined to one great circle of the Bloch sphere and is
described by a single angle ``theta`` in ``(-pi, pi]``.  Between clicks the
angle follows the drift ``Omega(theta) = -2 gamma0 (1 + lam sin theta)``;
clicks arrive at rate ``gamma sin^2(theta / 2)`` and reset the angle to ``pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

#: Width of the band around lam = 1 (and lam = 2) treated as the critical point.
CRITICAL_BAND = 1e-9


class Regime(str, Enum):
    SUB = "sub"  # lam < 1
    CRITICAL = "critical"  # lam == 1
    SUPER = "super"  # lam > 1


class CountingRegime(str, Enum):
    BELOW = "lam<2"
    CONFLUENT = "lam=2"
    ABOVE = "lam>2"


class RegimeError(ValueError):
    """Raised when an operation is called outside the regime it supports."""


def wrap(theta):
    """Wrap angles into ``(-pi, pi]``; ``-pi`` maps to ``pi``."""
    out = math.pi - np.mod(math.pi - np.asarray(theta, dtype=float), 2.0 * math.pi)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ModelParams:
    """Rates and derived regime constants.

    Constants that do not apply to the current regime are ``None``.
    """

    gamma0: float
    gamma: float
    lam: float
    regime: Regime
    counting_regime: CountingRegime
    beta: Optional[float] = None
    beta_prime: Optional[float] = None
    phi: Optional[float] = None
    phi_prime: Optional[float] = None
    omega: Optional[float] = None
    omega_prime: Optional[float] = None
    varphi: Optional[float] = None
    varphi_prime: Optional[float] = None

    @property
    def theta_plus(self) -> Optional[float]:
        """Stable fixed point of the drift (``-pi/2`` at criticality)."""
        if self.regime is Regime.SUB:
            return None
        if self.regime is Regime.CRITICAL:
            return -math.pi / 2
        return -math.asin(1.0 / self.lam)

    @property
    def theta_minus(self) -> Optional[float]:
        if self.regime is Regime.SUB:
            return None
        if self.regime is Regime.CRITICAL:
            return -math.pi / 2
        return wrap(math.pi + math.asin(1.0 / self.lam))


def make_params(gamma0: float, gamma: float) -> ModelParams:
    """Build :class:`ModelParams` from the Rabi scale and measurement coupling."""
    gamma0 = float(gamma0)
    gamma = float(gamma)
    if not (math.isfinite(gamma0) and math.isfinite(gamma)):
        raise ValueError("gamma0 and gamma must be finite")
    if gamma0 <= 0:
        raise ValueError(f"gamma0 must be positive, got {gamma0}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")

    lam = gamma / (4.0 * gamma0)
    kw = {}
    if abs(lam - 1.0) < CRITICAL_BAND:
        regime = Regime.CRITICAL
    elif lam < 1.0:
        regime = Regime.SUB
        beta = math.sqrt(1.0 - lam * lam)
        kw["beta"] = beta
        # branch (0, pi/2]: keeps S(0) = 1
        kw["phi"] = math.atan2(beta, lam)
    else:
        regime = Regime.SUPER
        beta_p = math.sqrt(lam * lam - 1.0)
        kw["beta_prime"] = beta_p
        kw["phi_prime"] = math.atanh(beta_p / lam)

    if abs(lam - 2.0) < CRITICAL_BAND:
        counting = CountingRegime.CONFLUENT
    elif lam < 2.0:
        counting = CountingRegime.BELOW
        w = math.sqrt(4.0 - lam * lam)
        kw["omega"] = gamma0 * w
        # sin(omega t + varphi) / sin(varphi) only depends on varphi mod pi
        kw["varphi"] = math.atan2(lam * w, lam * lam - 2.0)
    else:
        counting = CountingRegime.ABOVE
        w = math.sqrt(lam * lam - 4.0)
        kw["omega_prime"] = gamma0 * w
        kw["varphi_prime"] = math.atanh(lam * w / (lam * lam - 2.0))

    return ModelParams(gamma0=gamma0, gamma=gamma, lam=lam, regime=regime,
                       counting_regime=counting, **kw)


def params_from_lambda(lam: float, gamma0: float = 1.0) -> ModelParams:
    return make_params(gamma0, 4.0 * gamma0 * lam)


def drift(theta, p: ModelParams):
    """Angular velocity ``-2 gamma0 (1 + lam sin theta)`` of the no-click flow."""
    return -2.0 * p.gamma0 * (1.0 + p.lam * np.sin(theta))


def click_rate(theta, p: ModelParams):
    """Click intensity ``gamma sin^2(theta/2)``."""
    return p.gamma * np.sin(0.5 * np.asarray(theta)) ** 2


@dataclass(frozen=True)
class FixedPoints:
    theta_plus: float
    theta_minus: float
    degenerate: bool
    plus_stable: bool
    minus_stable: bool


def fixed_points(p: ModelParams) -> Optional[FixedPoints]:
    """Zeros of the drift, with stability read off from ``dOmega/dtheta``.

    Returns ``None`` for ``lam < 1``.  At ``lam = 1`` the two points merge
    into the half-stable saddle-node ``-pi/2``.
    """
    if p.regime is Regime.SUB:
        return None
    if p.regime is Regime.CRITICAL:
        return FixedPoints(-math.pi / 2, -math.pi / 2, True, False, False)
    tp, tm = p.theta_plus, p.theta_minus
    slope = lambda th: -2.0 * p.gamma0 * p.lam * math.cos(th)  # noqa: E731
    return FixedPoints(tp, tm, False, slope(tp) < 0, slope(tm) < 0)
