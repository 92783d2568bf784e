"""Deterministic no-click dynamics.

Between clicks the angle obeys ``dtheta/dt = Omega(theta)``.  The flow is
solved exactly by mapping the half-angle pair ``(cos theta/2, sin theta/2)``
onto a coordinate in which the motion is uniform:

* ``lam < 1``: the phase ``phi = 2 atan((lam + tan(theta/2)) / beta)``
  decreases at the constant rate ``2 beta gamma0``;
* ``lam = 1``: ``x = -2 / (1 + tan(theta/2))`` decreases at rate ``2 gamma0``;
* ``lam > 1``: the cross ratio of ``tan(theta/2)`` with the two fixed points
  contracts like ``exp(-2 beta' gamma0 t)``.

In every regime ``1 + lam sin theta`` is a ratio of the same homogeneous
coordinates, which keeps survival probabilities accurate near fixed points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams, Regime, RegimeError, click_rate, drift, wrap


@dataclass(frozen=True)
class WaveFunction:
    """Two-component amplitude ``a|psi0> + b|psi1>`` (possibly unnormalized)."""

    a: complex
    b: complex

    def norm2(self) -> float:
        return abs(self.a) ** 2 + abs(self.b) ** 2

    def normalized(self) -> "WaveFunction":
        n = math.sqrt(self.norm2())
        return WaveFunction(self.a / n, self.b / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=complex)


PSI0 = WaveFunction(1.0 + 0j, 0j)
PSI1 = WaveFunction(0j, 1j)


def angle_state(theta: float) -> WaveFunction:
    """The yz-plane state ``(cos theta/2, i sin theta/2)``."""
    return WaveFunction(complex(math.cos(theta / 2)), 1j * math.sin(theta / 2))


# -- orbit coordinates --------------------------------------------------------

def _half(theta):
    th = wrap(theta)
    return np.cos(0.5 * th), np.sin(0.5 * th)


def _advance(dt, theta0, p: ModelParams):
    """Flow ``theta0`` forward by ``dt``.

    Returns ``(theta_t, log_ratio)`` with ``log_ratio = log[(1 + lam sin theta0) /
    (1 + lam sin theta_t)]``, computed without forming either factor.
    """
    dt = np.asarray(dt, dtype=float)
    c0, s0 = _half(theta0)
    c0, s0 = np.broadcast_arrays(c0, s0)
    g0 = p.gamma0

    if p.regime is Regime.SUB:
        lam, beta = p.lam, p.beta
        ph0 = 2.0 * np.arctan2(lam * c0 + s0, beta * c0)
        # (1 + lam sin) = beta^2 / |(c, s)|^2 with c = cos(phi/2), s = beta sin(phi/2) - lam c
        C0, S0 = np.cos(0.5 * ph0), np.sin(0.5 * ph0)
        n0 = C0**2 + (beta * S0 - lam * C0) ** 2
        ph = wrap(ph0 - 2.0 * beta * g0 * dt)
        C, S = np.cos(0.5 * ph), np.sin(0.5 * ph)
        c, s = C, beta * S - lam * C
        log_ratio = np.log((c**2 + s**2) / n0)
    elif p.regime is Regime.CRITICAL:
        den = c0 + s0
        pinned = np.abs(den) < 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            x0 = np.where(pinned, 0.0, -2.0 * c0 / np.where(pinned, 1.0, den))
        x = x0 - 2.0 * g0 * dt
        sign = np.where(x > 0, -1.0, 1.0)
        c, s = -x * sign, (2.0 + x) * sign
        log_ratio = np.log((x**2 + (2.0 + x) ** 2) / (x0**2 + (2.0 + x0) ** 2))
        c = np.where(pinned, c0, c)
        s = np.where(pinned, s0, s)
        log_ratio = np.where(pinned, 0.0, log_ratio)
    else:
        lam, bp = p.lam, p.beta_prime
        P0 = s0 + (lam - bp) * c0
        Q0 = s0 + (lam + bp) * c0
        P = P0 * np.exp(-2.0 * bp * g0 * dt)
        Q = Q0 * np.ones_like(P)
        c = (Q - P) / (2.0 * bp)
        s = P - (lam - bp) * c
        flip = np.where(c < 0, -1.0, 1.0)
        c, s = c * flip, s * flip
        # (1 + lam sin) = P Q / |(c, s)|^2; P shrinks by exp(-2 k), Q fixed
        # (c0, s0) is unit length
        log_ratio = 2.0 * bp * g0 * dt + np.log(c**2 + s**2)
    theta = wrap(2.0 * np.arctan2(s, c))
    return theta, log_ratio


def flow_closed(dt, theta0, p: ModelParams):
    """Closed-form ``theta_{s+dt}(s, theta0)``; broadcasts over arrays."""
    if np.any(np.asarray(dt) < 0):
        raise ValueError("flow only runs forward in time")
    return _advance(dt, theta0, p)[0]


def flow_numeric(dt, theta0: float, p: ModelParams, rtol: float = 1e-12,
                 atol: float = 1e-12):
    """Adaptive Runge-Kutta (DOP853) integration of ``dtheta = Omega dt``."""
    dt_arr = np.atleast_1d(np.asarray(dt, dtype=float))
    if np.any(dt_arr < 0):
        raise ValueError("flow only runs forward in time")
    t_end = float(dt_arr.max()) if dt_arr.size else 0.0
    if t_end == 0.0:
        out = np.full(dt_arr.shape, wrap(theta0))
    else:
        sol = solve_ivp(lambda _t, y: drift(y, p), (0.0, t_end), [float(theta0)],
                        method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        out = wrap(sol.sol(dt_arr)[0])
    if np.ndim(dt) == 0:
        return float(np.asarray(out).reshape(-1)[0])
    return out


def flow(t, s, theta_start, p: ModelParams, method: str = "closed_form"):
    """Angle at time ``t`` of the no-click orbit through ``theta_start`` at ``s``."""
    dt = np.asarray(t, dtype=float) - s
    if method == "closed_form":
        out = flow_closed(dt, theta_start, p)
    elif method == "numeric":
        out = flow_numeric(dt, theta_start, p)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


# -- survival -----------------------------------------------------------------

def log_survival(t, theta0, p: ModelParams):
    """``log P[no click in (0, t] | theta0]``."""
    t = np.asarray(t, dtype=float)
    if p.gamma == 0:
        # no clicks at all; skip the rounding of the ratio
        return np.zeros(np.broadcast(t, np.asarray(theta0)).shape)
    _, log_ratio = _advance(t, theta0, p)
    return log_ratio - 0.5 * p.gamma * t


def survival(t, theta0, p: ModelParams):
    """No-click probability ``Omega(theta0)/Omega(theta_t) exp(-gamma t / 2)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    out = np.exp(log_survival(t, theta0, p))
    return float(out) if np.ndim(out) == 0 else out


def survival_from_ground(t, p: ModelParams):
    """Survival from ``|psi0>`` written with sin/sinh/polynomial factors."""
    t = np.asarray(t, dtype=float)
    g0, decay = p.gamma0, np.exp(-0.5 * p.gamma * t)
    if p.regime is Regime.SUB:
        x = p.beta * g0 * t
        return decay * (np.sin(x) ** 2 + np.sin(x + p.phi) ** 2) / p.beta**2
    if p.regime is Regime.CRITICAL:
        return decay * ((g0 * t) ** 2 + (1.0 + g0 * t) ** 2)
    x = p.beta_prime * g0 * t
    return decay * (np.sinh(x) ** 2 + np.sinh(x + p.phi_prime) ** 2) / p.beta_prime**2


def first_click_quantile(u, theta0, p: ModelParams, tol: float = 1e-12):
    """Time ``tau`` with ``survival(tau, theta0) = u`` (inverse-CDF sampling).

    Vectorised bracketing plus bisection; bisection never stalls where the
    survival curve flattens near the fixed points.
    """
    if p.gamma == 0:
        raise RegimeError("no clicks occur when gamma = 0")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 1):
        raise ValueError("u must lie in (0, 1]")
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), u.shape)
    log_u = np.log(u)

    hi = np.full(u.shape, 1.0 / p.gamma0)
    for _ in range(200):
        short = log_survival(hi, theta0, p) > log_u
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
    lo = np.zeros_like(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        ls = log_survival(mid, theta0, p)
        above = ls >= log_u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        # |dS| <= |dlogS| since S <= 1
        if np.all((hi - lo) <= 1e-15 * np.maximum(hi, 1e-300)) or np.all(
                np.abs(np.exp(ls) - u) <= tol * 1e-3):
            break
    tau = 0.5 * (lo + hi)
    tau = np.where(u == 1.0, 0.0, tau)
    return float(tau) if tau.ndim == 0 else tau


# -- wave-function picture ----------------------------------------------------

def propagator_matrix(t: float, p: ModelParams) -> np.ndarray:
    """``exp(-i gamma0 t H_eff)`` with ``H_eff = [[0, 1], [1, -2 i lam]]``.

    Writing ``H_eff = -i lam I + K`` gives ``K^2 = (1 - lam^2) I``, so the
    exponential is a cos/sin pair for ``lam < 1``, cosh/sinh for ``lam > 1``
    and a nilpotent (Jordan) term at ``lam = 1``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lam, x = p.lam, p.gamma0 * t
    K = np.array([[1j * lam, 1.0], [1.0, -1j * lam]], dtype=complex)
    if p.regime is Regime.SUB:
        cos_part, sin_part = math.cos(p.beta * x), math.sin(p.beta * x) / p.beta
    elif p.regime is Regime.CRITICAL:
        cos_part, sin_part = 1.0, x
    else:
        cos_part = math.cosh(p.beta_prime * x)
        sin_part = math.sinh(p.beta_prime * x) / p.beta_prime
    return math.exp(-lam * x) * (cos_part * np.eye(2) - 1j * sin_part * K)


def propagator(t: float, psi0: WaveFunction, p: ModelParams) -> WaveFunction:
    """Unnormalised no-click state; its squared norm is the survival."""
    a, b = propagator_matrix(t, p) @ psi0.as_array()
    return WaveFunction(complex(a), complex(b))


def bloch_angle(psi: WaveFunction, tol: float = 1e-9) -> float:
    """Angle of a yz-plane state ``(cos theta/2, i sin theta/2)`` up to phase."""
    a, b = complex(psi.a), complex(psi.b)
    if abs(a) > 1e-300:
        g = abs(a) / a
        a, b = abs(a), b * g
    else:
        # a = 0: gauge b onto +i
        a, b = 0.0, 1j * abs(b)
    if abs(b.real) > tol * max(1.0, math.hypot(a, abs(b))):
        raise ValueError("state is not in the yz plane of the Bloch sphere")
    return wrap(2.0 * math.atan2(b.imag, a))


def integrated_rate_numeric(t_grid, theta0: float, p: ModelParams,
                            rtol: float = 1e-12, atol: float = 1e-14):
    """``int_0^t alpha(theta_s) ds`` along a numerically integrated orbit."""
    t_grid = np.asarray(t_grid, dtype=float)
    t_end = float(t_grid.max())

    def rhs(_t, y):
        return [drift(y[0], p), click_rate(y[0], p)]

    sol = solve_ivp(rhs, (0.0, max(t_end, 1e-300)), [float(theta0), 0.0],
                    method="DOP853", rtol=rtol, atol=atol, t_eval=t_grid)
    return sol.y[1]
