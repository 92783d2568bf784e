"""Time-dependent density ``P(theta, t)`` from the last-reset decomposition.

Conditioning on the time ``tau`` elapsed since the last click gives

    P(theta, t) = S(t | 0) delta(theta - theta_t(0, 0))
                  + sum_n abar(t - tau_n) S(tau_n | pi) / |Omega(theta)|,

where ``tau_n(theta)`` are the times at which the no-click orbit of ``pi``
passes through ``theta`` and ``abar`` is the mean click rate.  For lam < 1
the orbit is periodic and revisits every angle; for lam >= 1 it creeps
towards ``theta_+`` and visits each reachable angle once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .counting import mean_rate
from .model import ModelParams, Regime, RegimeError, drift, wrap
from .noclick import flow_closed, survival


@dataclass(frozen=True)
class DistributionSnapshot:
    """``P(theta, t)`` as a point mass plus a density on ``(support[0], support[1]]``.

    ``orbit_weight(tau)`` is ``P_c |Omega|`` at ``theta_tau(0, pi)``: the same
    density written in the time coordinate along the orbit of ``pi``.
    """

    t: float
    atom_position: float
    atom_mass: float
    continuous: Callable[[np.ndarray], np.ndarray]
    support: tuple
    params: ModelParams
    orbit_weight: Optional[Callable[[float], float]] = None
    breakpoints: tuple = ()

    def on_grid(self, n: int = 2048):
        theta = np.linspace(-math.pi, math.pi, n + 1)[1:]
        return theta, self.continuous(theta)

    def continuous_mass(self, f: Optional[Callable] = None, epsabs: float = 1e-13) -> float:
        """``int f(theta) P_c(theta) dtheta`` by adaptive quadrature in orbit time.

        Every point of the support is ``theta_tau(0, pi)`` for some ``tau`` in
        ``[0, t]`` and ``dtheta = |Omega| dtau``.  For lam > 1 most of the late
        mass sits closer to ``theta_+`` than a double can resolve in ``theta``,
        while it is spread out smoothly in ``tau``.
        """
        if self.orbit_weight is None:
            return self.continuous_mass_theta(f)
        p = self.params

        def integrand(tau):
            w = self.orbit_weight(tau)
            if f is None or w == 0.0:
                return w
            return w * float(f(flow_closed(tau, math.pi, p)))

        val, _ = integrate.quad(integrand, 0.0, self.t, epsabs=epsabs, epsrel=1e-12, limit=500)
        return val

    def continuous_mass_theta(self, f: Optional[Callable] = None) -> float:
        """The same integral taken directly in ``theta`` (cross-check)."""
        lo, hi = self.support
        g = self.continuous if f is None else (lambda x: f(x) * self.continuous(x))
        pts = [b for b in self.breakpoints if lo < b < hi]
        val, _ = integrate.quad(lambda x: float(g(np.asarray(x))), lo, hi, points=pts or None,
                                epsabs=1e-12, epsrel=1e-12, limit=500)
        return val

    def total_mass(self) -> float:
        return self.atom_mass + self.continuous_mass()


# -- orbit of pi ---------------------------------------------------------------

def _half(theta):
    th = wrap(theta)
    return np.cos(0.5 * th), np.sin(0.5 * th)


def _one_plus(theta, p: ModelParams):
    """``1 + lam sin theta`` without cancellation near the fixed points."""
    c, s = _half(theta)
    if p.regime is Regime.CRITICAL:
        return (c + s) ** 2
    if p.regime is Regime.SUPER:
        bp = p.beta_prime
        return (s + (p.lam - bp) * c) * (s + (p.lam + bp) * c)
    return 1.0 + p.lam * np.sin(wrap(theta))


def _log_decay_and_tau(theta, p: ModelParams):
    """``(tau0, log S(tau0 | pi) + log(1 + lam sin theta))``; ``tau0 = inf`` if unreachable.

    The second entry is ``-gamma tau0 / 2``, evaluated as a log ratio for lam > 1.
    """
    c, s = _half(theta)
    g0, lam = p.gamma0, p.lam
    if p.regime is Regime.SUB:
        ph = 2.0 * np.arctan2(lam * c + s, p.beta * c)
        tau = (math.pi - ph) / (2.0 * p.beta * g0)
        return tau, -0.5 * p.gamma * tau
    if p.regime is Regime.CRITICAL:
        den = c + s
        ok = den > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.where(ok, c / (g0 * np.where(ok, den, 1.0)), np.inf)
        return tau, -0.5 * p.gamma * tau
    bp = p.beta_prime
    P, Q = s + (lam - bp) * c, s + (lam + bp) * c
    ok = (P > 0) & (Q > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(ok, np.log(np.where(ok, P, 1.0) / np.where(ok, Q, 1.0)), -np.inf)
    tau = -logr / (2.0 * bp * g0)
    return tau, (lam / bp) * logr


def tau0(theta, p: ModelParams):
    """Time for the no-click orbit of ``pi`` to first reach ``theta``."""
    tau, _ = _log_decay_and_tau(theta, p)
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)):
        raise ValueError("theta is not reachable from pi without a click")
    return float(tau) if tau.ndim == 0 else tau


def period(p: ModelParams) -> float:
    """Return time of the orbit of ``pi`` to itself (lam < 1)."""
    if p.regime is not Regime.SUB:
        raise RegimeError("the orbit of pi is periodic only for lam < 1")
    return math.pi / (p.beta * p.gamma0)


def support_lower(t: float, p: ModelParams) -> float:
    """Left end of the support of the continuous part at time ``t``."""
    if p.regime is Regime.SUB and t >= period(p):
        return -math.pi
    if t == 0:
        return math.pi
    return float(flow_closed(t, math.pi, p))


# -- steady state --------------------------------------------------------------

def steady_state(theta, p: ModelParams):
    """Long-time density; zero outside ``(theta_+, pi]`` when lam >= 1."""
    if p.lam == 0:
        raise ValueError("no click ever happens for lam = 0, so there is no steady state")
    theta = np.asarray(theta, dtype=float)
    tau, logd = _log_decay_and_tau(theta, p)
    op = _one_plus(theta, p)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(np.isfinite(tau), p.lam * np.exp(logd) / op**2, 0.0)
    if p.regime is Regime.SUB:
        out = out / -math.expm1(-2.0 * math.pi * p.lam / p.beta)
    return float(out) if out.ndim == 0 else out


def steady_state_exponent(p: ModelParams) -> float:
    """Local power ``lam / beta' - 2`` of the steady state at ``theta_+`` (lam > 1)."""
    if p.regime is not Regime.SUPER:
        raise RegimeError("only lam > 1 has a stable fixed point inside the support")
    return p.lam / p.beta_prime - 2.0


def steady_state_mass(p: ModelParams) -> float:
    """``int P_inf`` by adaptive quadrature, with an algebraic weight at ``theta_+``."""
    if p.regime is Regime.SUB:
        val, _ = integrate.quad(lambda x: float(steady_state(x, p)), -math.pi, math.pi,
                                epsabs=1e-13, epsrel=1e-12, limit=400)
        return val
    if p.regime is Regime.CRITICAL:
        val, _ = integrate.quad(lambda x: float(steady_state(x, p)), -math.pi / 2, math.pi,
                                epsabs=1e-13, epsrel=1e-12, limit=400)
        return val
    tp = p.theta_plus
    e = steady_state_exponent(p)
    mid = 0.5 * (tp + math.pi)

    lam, bp = p.lam, p.beta_prime
    c, s = math.cos(0.5 * tp), math.sin(0.5 * tp)
    # P = lam (P/Q)^{lam/beta'} / (P Q)^2 with P ~ P'(theta_+) (theta - theta_+)
    dP = 0.5 * (c - (lam - bp) * s)
    Q = s + (lam + bp) * c
    at_tp = lam * dP**e / Q ** (lam / bp + 2.0)

    def smooth(x):
        if x <= tp:
            return at_tp
        return float(steady_state(x, p)) / (x - tp) ** e

    near, _ = integrate.quad(smooth, tp, mid, weight="alg", wvar=(e, 0.0),
                             epsabs=1e-13, epsrel=1e-12, limit=400)
    far, _ = integrate.quad(lambda x: float(steady_state(x, p)), mid, math.pi,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return near + far


def steady_snapshot(p: ModelParams) -> DistributionSnapshot:
    lo = -math.pi if p.regime is Regime.SUB else p.theta_plus
    return DistributionSnapshot(math.inf, math.nan, 0.0, lambda x: steady_state(x, p),
                                (lo, math.pi), p,
                                lambda tau: 0.5 * p.gamma * float(survival(tau, math.pi, p)))


# -- time-dependent density ----------------------------------------------------

def _renewal_continuous(theta, t: float, p: ModelParams):
    theta = np.asarray(theta, dtype=float)
    tau, logd = _log_decay_and_tau(theta, p)
    op = _one_plus(theta, p)
    out = np.zeros(np.broadcast(theta, tau).shape)
    reach = np.isfinite(tau) & (tau <= t)
    if not reach.any():
        return out
    base = np.where(reach, np.exp(np.where(reach, logd, 0.0)) / (2.0 * p.gamma0 * op**2), 0.0)
    if p.regime is Regime.SUB:
        T = period(p)
        n_max = int(math.floor(t / T)) + 1
        for n in range(n_max + 1):
            tn = tau + n * T
            on = reach & (tn <= t)
            if not on.any():
                break
            out = out + np.where(on, mean_rate(np.where(on, t - tn, 0.0), p)
                                 * base * math.exp(-0.5 * p.gamma * n * T), 0.0)
    else:
        out = np.where(reach, mean_rate(np.where(reach, t - tau, 0.0), p) * base, 0.0)
    return out


def _snapshot(t: float, p: ModelParams, dens, weight) -> DistributionSnapshot:
    atom_pos = float(flow_closed(t, 0.0, p))
    lo = support_lower(t, p)
    bps = (float(flow_closed(t, math.pi, p)),)
    return DistributionSnapshot(t, atom_pos, float(survival(t, 0.0, p)), dens, (lo, math.pi), p,
                                weight, bps)


def renewal_convolve(t: float, p: ModelParams) -> DistributionSnapshot:
    """General evaluator of ``P(., t)``: sum over visit times of the orbit of ``pi``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    def weight(tau):
        return float(mean_rate(t - tau, p) * survival(tau, math.pi, p)) if p.lam else 0.0

    return _snapshot(t, p, lambda th: _renewal_continuous(th, t, p), weight)


def renewal_density(theta, t: float, p: ModelParams):
    """Continuous part of ``P(theta, t)``."""
    out = _renewal_continuous(theta, t, p)
    return float(out) if np.ndim(out) == 0 else out


def _bracket(u, p: ModelParams):
    """``1 - 2 e^{-lam gamma0 u} sin(w gamma0 u + atan(w / lam)) / w``, ``w = sqrt(4 - lam^2)``.

    Evaluated in complex arithmetic so one expression covers lam > 2 as well.
    """
    u = np.asarray(u, dtype=float)
    lam, x = p.lam, p.gamma0 * u
    w = np.sqrt(complex(4.0 - lam * lam))
    if abs(w) < 1e-6:
        return 1.0 - np.exp(-lam * x) * (1.0 + lam * x)
    a = np.arctan(w / lam)
    return (1.0 - 2.0 * np.exp(-lam * x) * np.sin(w * x + a) / w).real


def density_closed(theta, t: float, p: ModelParams):
    """Continuous part of ``P(theta, t)`` as a damped-oscillation factor times the steady shape.

    For lam < 1 this holds only while the orbit of ``pi`` has not yet closed,
    ``t <= pi / (beta gamma0)``.
    """
    if p.regime is Regime.SUB and t > period(p) * (1 + 1e-12):
        raise RegimeError("closed form needs t <= pi/(beta gamma0) when lam < 1; use renewal_convolve")
    if p.lam == 0:
        return np.zeros_like(np.asarray(theta, dtype=float))
    theta = np.asarray(theta, dtype=float)
    tau, logd = _log_decay_and_tau(theta, p)
    op = _one_plus(theta, p)
    reach = np.isfinite(tau) & (tau <= t)
    shape = np.where(reach, p.lam * np.exp(np.where(reach, logd, 0.0)) / op**2, 0.0)
    out = np.where(reach, _bracket(np.where(reach, t - tau, 0.0), p) * shape, 0.0)
    return float(out) if out.ndim == 0 else out


def closed_snapshot(t: float, p: ModelParams) -> DistributionSnapshot:
    density_closed(math.pi, t, p)  # validity check
    def weight(tau):
        return float(0.5 * p.gamma * _bracket(t - tau, p) * survival(tau, math.pi, p))

    return _snapshot(t, p, lambda th: density_closed(th, t, p), weight)


# -- averaged state ------------------------------------------------------------

def density_matrix(snap: DistributionSnapshot) -> np.ndarray:
    """``int P(theta) |theta><theta| dtheta`` with ``|theta> = (cos theta/2, i sin theta/2)``."""
    ec = snap.continuous_mass(np.cos)
    es = snap.continuous_mass(np.sin)
    m = snap.continuous_mass()
    if snap.atom_mass > 0:
        ec += snap.atom_mass * math.cos(snap.atom_position)
        es += snap.atom_mass * math.sin(snap.atom_position)
        m += snap.atom_mass
    # trace fixed to the snapshot's total mass
    return 0.5 * np.array([[m + ec, -1j * es], [1j * es, m - ec]], dtype=complex)
