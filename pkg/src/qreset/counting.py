"""Click-counting statistics for a qubit started in ``theta0 = 0``.

Everything here is built on one renewal structure: the first click arrives
with density ``A(t) = -dS(t | 0)/dt``, later inter-click gaps have density
``K(t) = -dS(t | pi)/dt`` and the tail after the last click survives with
``S(t | pi)``.  In Laplace space this resums into a rational function whose
denominator is a cubic in ``mu = sigma + gamma/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import CountingRegime, ModelParams, Regime, RegimeError, click_rate
from .noclick import flow_closed, survival

#: Relative root separation below which roots are reported as confluent.
CONFLUENT_TOL = 1e-9
#: Relative root separation below which residues are summed as divided differences.
_CLUSTER_TOL = 1e-2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class CubicRoots:
    sigma1: complex
    sigma2: complex
    sigma3: complex
    confluent: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3], dtype=complex)


# -- Laplace-domain pieces ----------------------------------------------------

def g_hat(sigma, shift: float, p: ModelParams):
    """Laplace transform of ``exp(-gamma t/2) sin^2(beta gamma0 t - shift)``."""
    if p.regime is not Regime.SUB:
        raise RegimeError("g_hat is defined through beta, i.e. for lam < 1")
    sigma = np.asarray(sigma, dtype=complex)
    mu = sigma + 0.5 * p.gamma
    if np.any(mu.real <= 0):
        raise ValueError("sigma must lie right of -gamma/2")
    b = 2.0 * p.beta * p.gamma0
    out = 0.5 * (1.0 / mu - (mu * math.cos(2 * shift) + b * math.sin(2 * shift))
                 / (mu**2 + b**2))
    return complex(out) if out.ndim == 0 else out


def _numerator(mu, p: ModelParams, s=0.0, literal: bool = False):
    """Numerator ``mu^2 + gamma (1/2 - e^{-s}) mu + 4 gamma0^2`` of the transform.

    The resummation over inter-click gaps makes the linear coefficient depend
    on ``s``; ``literal=True`` freezes it at its ``s = 0`` value ``-gamma/2``.
    """
    z = 1.0 if literal else np.exp(-s)
    return mu**2 + p.gamma * (0.5 - z) * mu + 4.0 * p.gamma0**2


def _denominator_coeffs(s, p: ModelParams) -> np.ndarray:
    """Monic cubic in ``mu`` (highest power first); ``beta^2 = 1 - lam^2`` for any lam."""
    g, g0, z = p.gamma, p.gamma0, np.exp(-s)
    b2 = 1.0 - p.lam**2
    return np.array([1.0, -g * z, 4.0 * b2 * g0**2 + 0.5 * g**2 * z, -2.0 * g * z * g0**2],
                    dtype=complex)


def mgf_laplace(sigma, s: float, p: ModelParams, literal: bool = False):
    """Laplace transform in ``t`` of ``E[exp(-s N_t)]``."""
    sigma = np.asarray(sigma, dtype=complex)
    if np.any(sigma.real <= 0):
        raise ValueError("Re(sigma) must be positive")
    mu = sigma + 0.5 * p.gamma
    den = np.polyval(_denominator_coeffs(s, p), mu)
    scale = (np.abs(mu) + p.gamma0 + p.gamma) ** 3
    if np.any(np.abs(den) < 1e-12 * scale):
        raise ValueError("sigma is too close to a pole of the transform")
    out = _numerator(mu, p, s, literal) / den
    return complex(out) if out.ndim == 0 else out


def mgf_laplace_resummed(sigma, s: float, p: ModelParams):
    """The same transform assembled as a geometric series over inter-click gaps."""
    b2 = p.beta**2
    gp, g0, gm = g_hat(sigma, p.phi, p), g_hat(sigma, 0.0, p), g_hat(sigma, -p.phi, p)
    q = p.gamma * math.exp(-s) / b2
    return (gm + g0 + q * g0 * (g0 + gp) / (1.0 - q * gp)) / b2


def mean_rate_laplace(sigma, p: ModelParams):
    """Laplace transform of the mean click rate, ``2 gamma gamma0^2 / (sigma f(mu))``.

    ``f(mu) = mu^2 - gamma mu / 2 + 4 gamma0^2`` is the ``s = 0`` numerator,
    equal to ``sigma^2 + gamma sigma / 2 + 4 gamma0^2``.
    """
    sigma = np.asarray(sigma, dtype=complex)
    mu = sigma + 0.5 * p.gamma
    out = 2.0 * p.gamma * p.gamma0**2 / (sigma * _numerator(mu, p))
    return complex(out) if out.ndim == 0 else out


def mean_rate_laplace_resummed(sigma, p: ModelParams):
    q = p.gamma / p.beta**2
    return q * g_hat(sigma, 0.0, p) / (1.0 - q * g_hat(sigma, p.phi, p))


# -- cubic roots and their residue sum ----------------------------------------

def _mu_roots(s, p: ModelParams) -> np.ndarray:
    c = _denominator_coeffs(s, p)
    comp = np.zeros((3, 3), dtype=complex)
    comp[0, :] = -c[1:]
    comp[1, 0] = comp[2, 1] = 1.0
    r = np.linalg.eigvals(comp)
    return r[np.lexsort((-r.imag, -r.real))]


def _polish(mu: np.ndarray, s, p: ModelParams) -> np.ndarray:
    """Two Newton steps on each eigenvalue; skipped where the derivative is tiny."""
    c = _denominator_coeffs(s, p)
    dc = np.polyder(c)
    mu = mu.copy()
    for _ in range(2):
        d = np.polyval(dc, mu)
        ok = np.abs(d) > 1e-6 * (np.abs(mu) + p.gamma0) ** 2
        mu[ok] -= np.polyval(c, mu[ok]) / d[ok]
    return mu


def cubic_roots(s, p: ModelParams) -> CubicRoots:
    """Zeros ``sigma_i`` of the transform's denominator, largest real part first.

    At ``s = 0`` the cubic factors as ``sigma (sigma^2 + 2 lam gamma0 sigma + 4 gamma0^2)``
    and the roots are taken in closed form: an eigenvalue solver splits a
    double root by ~sqrt(eps), far above the confluence threshold.
    """
    if s == 0:
        d = np.sqrt(complex(p.lam**2 - 4.0))
        sig = np.array([0.0, -p.lam + d, -p.lam - d]) * p.gamma0
        sig = sig[np.lexsort((-sig.imag, -sig.real))]
    else:
        sig = _polish(_mu_roots(s, p), s, p) - 0.5 * p.gamma
    scale = max(np.abs(sig).max(), p.gamma0)
    gaps = [abs(sig[i] - sig[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    return CubicRoots(complex(sig[0]), complex(sig[1]), complex(sig[2]),
                      min(gaps) < CONFLUENT_TOL * scale)


def _residue_sum(f, df, roots, t: float, scale: float) -> complex:
    """Sum of residues of ``f(z) exp(z t) / prod(z - r_i)`` for a cubic.

    Well separated roots use the textbook formula.  A close pair is treated
    as the divided difference ``F[a, b] = int_0^1 F'(b + u (a - b)) du`` of
    ``F(z) = f(z) exp(z t) / (z - c)``, which tends smoothly to the
    double-root (derivative) formula.  A close triple uses a small contour.
    """
    r = np.asarray(roots, dtype=complex)
    d = {(i, j): abs(r[i] - r[j]) for i, j in ((0, 1), (0, 2), (1, 2))}
    close = [k for k, v in d.items() if v < _CLUSTER_TOL * scale]
    if not close:
        total = 0j
        for i in range(3):
            j, k = [m for m in range(3) if m != i]
            total += f(r[i]) * np.exp(r[i] * t) / ((r[i] - r[j]) * (r[i] - r[k]))
        return total
    if len(close) == 1:
        i, j = close[0]
        k = 3 - i - j
        a, b, c = r[i], r[j], r[k]
        z = b + 0.5 * (_GL_X + 1.0) * (a - b)
        e = np.exp(z * t)
        dF = e * ((df(z) + t * f(z)) / (z - c) - f(z) / (z - c) ** 2)
        pair = 0.5 * np.dot(_GL_W, dF)
        return pair + f(c) * np.exp(c * t) / ((c - a) * (c - b))
    center = r.mean()
    rad = max(3.0 * np.abs(r - center).max(), 1e-3 * scale)
    z = center + rad * np.exp(2j * np.pi * (np.arange(64) + 0.5) / 64)
    vals = f(z) * np.exp(z * t) / ((z - r[0]) * (z - r[1]) * (z - r[2]))
    return np.mean(vals * (z - center))


def _mgf_complex(s, t: float, p: ModelParams, literal: bool = False) -> complex:
    if t == 0:
        return 1.0 + 0j
    mu = _mu_roots(s, p)
    scale = max(np.abs(mu).max(), p.gamma0)
    g = p.gamma
    lin = g * (0.5 - (1.0 if literal else np.exp(-s)))
    # shift the exponent so e^{sigma t} = e^{-gamma t/2} e^{mu t}
    val = _residue_sum(lambda z: z**2 + lin * z + 4.0 * p.gamma0**2,
                       lambda z: 2.0 * z + lin, mu, t, scale)
    return val * math.exp(-0.5 * g * t)


def mgf(s: float, t: float, p: ModelParams, literal: bool = False) -> float:
    """``E[exp(-s N_t)]`` from the three-pole expansion of the Laplace transform."""
    if s < 0:
        raise ValueError("s must be non-negative")
    if t < 0:
        raise ValueError("t must be non-negative")
    return float(_mgf_complex(s, t, p, literal).real)


def count_distribution(t: float, p: ModelParams, n_terms: int = 64) -> np.ndarray:
    """``P[N_t = n]`` for ``n < n_terms`` from the generating function on the unit circle.

    Uses ``E[z^N]`` at the ``n_terms`` roots of unity (complex ``s = -log z``)
    and a discrete Fourier transform; aliasing adds ``P[n + n_terms]``.
    """
    k = np.arange(n_terms)
    s_vals = -2j * np.pi * k / n_terms
    G = np.array([_mgf_complex(sv, t, p) for sv in s_vals])
    return (np.fft.fft(G) / n_terms).real


# -- mean count and mean rate -------------------------------------------------

def _osc(t, p: ModelParams):
    """``(C, S)`` with ``C = cos(omega t)``, ``S = sin(omega t) / (omega/gamma0)``, continued past lam = 2."""
    g0, lam = p.gamma0, p.lam
    if p.counting_regime is CountingRegime.BELOW:
        w = p.omega / g0
        return np.cos(p.omega * t), np.sin(p.omega * t) / w
    if p.counting_regime is CountingRegime.CONFLUENT:
        return np.ones_like(t), g0 * t
    w = p.omega_prime / g0
    return np.cosh(p.omega_prime * t), np.sinh(p.omega_prime * t) / w


def mean_count(t, p: ModelParams):
    """``E[N_t]`` in closed form for each counting regime."""
    t = np.asarray(t, dtype=float)
    lam, g0 = p.lam, p.gamma0
    damp = np.exp(-lam * g0 * t)
    if p.counting_regime is CountingRegime.BELOW:
        if lam == 0:
            out = np.zeros_like(t)
        else:
            out = 2 * lam * g0 * t + lam**2 * (
                -1.0 + damp * np.sin(p.omega * t + p.varphi) / math.sin(p.varphi))
    elif p.counting_regime is CountingRegime.CONFLUENT:
        x = g0 * t
        out = 4.0 * (-1.0 + x + np.exp(-2.0 * x) * (1.0 + x))
    else:
        out = 2 * lam * g0 * t + lam**2 * (
            -1.0 + damp * np.sinh(p.omega_prime * t + p.varphi_prime) / math.sinh(p.varphi_prime))
    return float(out) if out.ndim == 0 else out


def mean_rate(t, p: ModelParams):
    """Mean click rate ``d E[N_t]/dt``.

    For lam < 2 this is ``gamma [1/2 - e^{-lam gamma0 t} (w cos wt + lam sin wt)/(2w)]``
    (time in units of ``1/gamma0``); cosh/sinh and polynomial continuations
    cover lam > 2 and lam = 2.
    """
    t = np.asarray(t, dtype=float)
    C, S = _osc(t, p)
    out = 0.5 * p.gamma * (1.0 - np.exp(-p.lam * p.gamma0 * t) * (C + p.lam * S))
    return float(out) if out.ndim == 0 else out


def mean_rate_complex_form(t, p: ModelParams):
    """The mean rate written with ``e^{+-i omega t}`` (lam < 2 only)."""
    if p.counting_regime is not CountingRegime.BELOW:
        raise RegimeError("complex-exponential form needs lam < 2")
    t = np.asarray(t, dtype=float)
    w, g0, lam = p.omega / p.gamma0, p.gamma0, p.lam
    e = np.exp(1j * p.omega * t)
    br = e / (w + 1j * lam) + 1.0 / e / (w - 1j * lam)
    return (p.gamma * (0.5 - (1.0 / w) * np.exp(-lam * g0 * t) * br)).real


def mean_count_from_mgf(t: float, p: ModelParams, h: float = 1e-6) -> float:
    """``-d/ds E[exp(-s N_t)]`` at ``s = 0`` by Richardson-extrapolated central differences."""
    def central(step):
        return -(_mgf_complex(step, t, p) - _mgf_complex(-step, t, p)).real / (2.0 * step)
    return (4.0 * central(0.5 * h) - central(h)) / 3.0


# -- exclusive probability densities -----------------------------------------

def _check_clicks(t: float, clicks) -> np.ndarray:
    c = np.asarray(clicks, dtype=float).reshape(-1)
    if c.size and (c[0] <= 0 or c[-1] > t or np.any(np.diff(c) <= 0)):
        raise ValueError("click times must satisfy 0 < t1 < ... < tn <= t")
    return c


def epd_joint(t: float, clicks, p: ModelParams, literal: bool = False):
    """Joint density of exactly the clicks ``t1 < ... < tn`` in ``(0, t]``.

    ``literal=True`` evaluates the lam > 1 gap factor with ``beta`` (the lam < 1
    constant, continued to ``i beta'``) in place of ``beta'``; the result is
    then complex in general and does not match the product construction.
    """
    c = _check_clicks(t, clicks)
    n = c.size
    if n == 0:
        return survival(t, 0.0, p)
    g, g0 = p.gamma, p.gamma0
    gaps = np.diff(np.concatenate([[0.0], c, [t]]))
    d0, mids, last = gaps[0], gaps[1:-1], gaps[-1]
    theta_t = float(flow_closed(last, np.pi, p))
    sn2, cs2 = math.sin(0.5 * theta_t) ** 2, math.cos(0.5 * theta_t) ** 2
    pref = math.exp(-0.5 * g * t)
    if p.regime is Regime.SUB:
        b, ph = p.beta, p.phi
        body = math.sin(b * g0 * d0) ** 2 * np.prod(np.sin(b * g0 * mids - ph) ** 2)
        tail = (math.sin(b * g0 * last - ph) ** 2 / sn2 if sn2 >= 0.5
                else math.sin(b * g0 * last) ** 2 / cs2)
        return pref / b**2 * (g / b**2) ** n * body * tail
    if p.regime is Regime.CRITICAL:
        body = (g0 * d0) ** 2 * np.prod((1.0 - g0 * mids) ** 2)
        tail = (1.0 - g0 * last) ** 2 / sn2 if sn2 >= 0.5 else (g0 * last) ** 2 / cs2
        return pref * g**n * body * tail
    bp, php = p.beta_prime, p.phi_prime
    rate = 1j * bp if literal else bp
    body = math.sinh(bp * g0 * d0) ** 2 * np.prod(np.sinh(rate * g0 * mids - php) ** 2)
    tail = (np.sinh(rate * g0 * last - php) ** 2 / sn2 if sn2 >= 0.5 or literal
            else math.sinh(bp * g0 * last) ** 2 / cs2)
    out = pref / bp**2 * (g / bp**2) ** n * body * tail
    return complex(out) if literal else float(out)


def epd_product(t: float, clicks, p: ModelParams) -> float:
    """The same density built leg by leg from survival and click rate."""
    c = _check_clicks(t, clicks)
    starts = np.concatenate([[0.0], c])
    ends = np.concatenate([c, [t]])
    out, theta = 1.0, 0.0
    for k, (a, b) in enumerate(zip(starts, ends)):
        out *= survival(b - a, theta, p)
        if k < c.size:
            out *= click_rate(float(flow_closed(b - a, theta, p)), p)
        theta = np.pi
    return float(out)


N_MAX = 4


def count_prob(n: int, t: float, p: ModelParams, n_max: int = N_MAX,
               epsabs: float = 1e-8) -> float:
    """``P[N_t = n]`` by iterated adaptive quadrature of the joint density over the simplex."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > n_max:
        raise ValueError(f"n = {n} exceeds n_max = {n_max}; use count_distribution")
    if n == 0:
        return float(survival(t, 0.0, p))
    tol = epsabs / n

    def inner(level, upper, fixed):
        # integrate t_level over (0, upper) with t_{level+1..n} held in `fixed`
        def integrand(x):
            if level == 1:
                return epd_joint(t, [x] + fixed, p)
            return inner(level - 1, x, [x] + fixed)
        if upper <= 0:
            return 0.0
        val, _ = integrate.quad(integrand, 0.0, upper, epsabs=tol, epsrel=1e-10, limit=200)
        return val

    return float(inner(n, t, []))
