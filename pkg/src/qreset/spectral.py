"""Eigen-expansion of the master-equation generator.

Writing ``P = exp(2 gamma0 nu t) f`` turns the master equation into

    L f = (1 + lam sin theta) f' + lam (2 cos theta - 1) f = nu f   on (-pi, pi),
    f(pi - 0) - f(-pi + 0) = 2 lam int sin^2(theta/2) f,

and the adjoint acts as ``L^+ h = -(1 + lam sin) h' - 2 lam sin^2(theta/2) (h - h(pi))``.
Pairings ``<a, b> = int conj(a) b`` are conjugate-linear on the left.

For ``0 < lam < 1`` everything is explicit in the phase
``varphi = 2 atan((lam + tan(theta/2)) / beta)``, which maps ``(-pi, pi)``
onto itself with ``dvarphi/dtheta = beta / (1 + lam sin theta)``.  At
``lam = 1`` the tower of eigenvalues fuses into the continuum
``nu_k = -1 + i k`` and only ``{0, nu_+, nu_-}`` stay discrete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import fft, integrate

from .model import ModelParams, Regime, RegimeError, wrap
from .noclick import flow_closed, survival
from .renewal import DistributionSnapshot

GRAM_TOL = 1e-8


def _require(p: ModelParams, regime: Regime, what: str):
    if p.regime is not regime:
        raise RegimeError(f"{what} needs the {regime.value} regime, got lam={p.lam}")


def _bound_pair(lam: float) -> Tuple[complex, complex]:
    w = math.sqrt(4.0 - lam * lam)
    return complex(-0.5 * lam, 0.5 * w), complex(-0.5 * lam, -0.5 * w)


# -- 0 < lam < 1 -----------------------------------------------------------------

def phase(theta, lam: float):
    """``varphi(theta, lam)`` with the boundary values ``varphi(+-pi) = +-pi``."""
    beta = math.sqrt(1.0 - lam * lam)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    # atan2 gives the branch through (-pi, pi]; theta = -pi maps to -pi
    out = 2.0 * np.arctan2(lam * c + s, beta * c)
    out = np.where(theta <= -math.pi, -math.pi, out)
    return float(out) if out.ndim == 0 else out


def phase_inverse(ph, lam: float):
    """Angle with ``varphi(theta) = ph``."""
    beta = math.sqrt(1.0 - lam * lam)
    C, S = np.cos(0.5 * np.asarray(ph)), np.sin(0.5 * np.asarray(ph))
    return 2.0 * np.arctan2(beta * S - lam * C, C)


def truncation_order(p: ModelParams, tol: float) -> int:
    """Smallest ``M`` whose a-priori tail bound is below ``tol / 2``.

    With ``|m| beta >= 2`` every factor of ``B_m`` is at least ``|m| beta / 2``,
    so ``|lam / B_m| <= 4 lam / (|m| beta)^3`` and ``sup |f_m| = c / (1 - lam)^2``.
    """
    lam, beta = p.lam, p.beta
    c2 = beta / (2.0 * math.pi)
    bound = 8.0 * lam * c2 / (beta**3 * (1.0 - lam) ** 2 * tol)
    return max(8, math.ceil(2.0 / beta), math.ceil(math.sqrt(bound)))


@dataclass(frozen=True)
class BiorthoBasis:
    """Right/left eigenfunctions of the generator for ``0 < lam < 1``.

    Labels are ``"0"``, ``"+"``, ``"-"`` for the displaced trio and integers
    ``|m| >= 2`` for the undisturbed tower ``nu_m = -lam + i m beta``.
    """

    p: ModelParams
    M: int
    c: float = field(init=False)
    nu_plus: complex = field(init=False)
    nu_minus: complex = field(init=False)

    def __post_init__(self):
        lam = self.p.lam
        object.__setattr__(self, "c", ((1.0 - lam * lam) / (4.0 * math.pi**2)) ** 0.25)
        nup, num = _bound_pair(lam)
        object.__setattr__(self, "nu_plus", nup)
        object.__setattr__(self, "nu_minus", num)

    @property
    def lam(self) -> float:
        return self.p.lam

    @property
    def beta(self) -> float:
        return self.p.beta

    @property
    def tower(self) -> np.ndarray:
        m = np.arange(-self.M, self.M + 1)
        return m[np.abs(m) > 1]

    def labels(self, m_max: Optional[int] = None):
        m_max = self.M if m_max is None else m_max
        return ["0", "+", "-"] + [int(m) for m in range(-m_max, m_max + 1) if abs(m) > 1]

    # eigenvalues
    def nu_m(self, m):
        return -self.lam + 1j * np.asarray(m) * self.beta

    def B(self, m):
        nu = self.nu_m(m)
        return nu * (nu - self.nu_minus) * (nu - self.nu_plus)

    def eigenvalue(self, label) -> complex:
        if label == "0":
            return 0j
        if label == "+":
            return self.nu_plus
        if label == "-":
            return self.nu_minus
        return complex(self.nu_m(label))

    def eigenvalues(self) -> np.ndarray:
        return np.array([self.eigenvalue(a) for a in self.labels()])

    # free pair
    def _op(self, theta):
        return 1.0 + self.lam * np.sin(theta)

    def fbar(self, m, theta):
        theta = np.asarray(theta, dtype=float)
        return self.c * np.exp(1j * m * phase(theta, self.lam)) / self._op(theta) ** 2

    def g(self, m, theta):
        theta = np.asarray(theta, dtype=float)
        return self.c * self._op(theta) * np.exp(1j * m * phase(theta, self.lam))

    # right eigenfunctions of L
    def f0(self, theta):
        theta = np.asarray(theta, dtype=float)
        lam, beta = self.lam, self.beta
        pre = lam / (2.0 * math.sinh(math.pi * lam / beta))
        return pre * np.exp(lam * phase(theta, lam) / beta) / self._op(theta) ** 2

    def f_bound(self, sign: int, theta):
        """``f_{nu_+}`` (sign=+1) or ``f_{nu_-}`` (sign=-1)."""
        theta = np.asarray(theta, dtype=float)
        nu = self.nu_minus if sign > 0 else self.nu_plus
        pre = nu / (2.0 * np.sinh(math.pi * nu / self.beta))
        return pre * np.exp(-nu * phase(theta, self.lam) / self.beta) / self._op(theta) ** 2

    # left eigenfunctions of L^+
    def h_bound(self, sign: int, theta):
        theta = np.asarray(theta, dtype=float)
        lam = self.lam
        nu = self.nu_minus if sign > 0 else self.nu_plus
        w = math.sqrt(4.0 - lam * lam)
        return -sign * 1j * lam * (np.cos(theta) - nu * np.sin(theta)) / w

    def h_tower(self, m: int, theta):
        theta = np.asarray(theta, dtype=float)
        out = self.g(m, theta).astype(complex)
        pre = (-1) ** m * self.lam**2 / self.B(-m)
        for k in (-1, 0, 1):
            out = out + pre * m * (m * m - 1) / ((m - k) * (k * k + 1)) / self.B(k) * self.g(k, theta)
        return out

    def f(self, label) -> Callable:
        if label == "0":
            return self.f0
        if label in ("+", "-"):
            sign = 1 if label == "+" else -1
            return lambda th: self.f_bound(sign, th)
        return lambda th: self.fbar(label, th)

    def h(self, label) -> Callable:
        if label == "0":
            return lambda th: np.ones_like(np.asarray(th, dtype=float))
        if label in ("+", "-"):
            sign = 1 if label == "+" else -1
            return lambda th: self.h_bound(sign, th)
        return lambda th: self.h_tower(label, th)


def build_basis_sub(p: ModelParams, M: Optional[int] = None, tol: float = 1e-6) -> BiorthoBasis:
    """Basis truncated at ``|m| <= M``; ``M`` from :func:`truncation_order` if omitted."""
    if not 0.0 < p.lam < 1.0:
        raise RegimeError("the discrete bi-orthonormal system needs 0 < lam < 1")
    M = truncation_order(p, tol) if M is None else int(M)
    if M < 8:
        raise ValueError("truncation M must be at least 8")
    return BiorthoBasis(p, M)


def gram_check(basis: BiorthoBasis, m_max: int = 12, system: str = "hf") -> np.ndarray:
    """Matrix of pairings ``<left_a, right_b>`` by adaptive quadrature.

    ``system="hf"`` pairs ``h`` with ``f`` over the labels of :meth:`labels`;
    ``system="gf"`` pairs the free functions ``g_m`` with ``fbar_n`` for all
    ``|m|, |n| <= m_max``.  The integral is taken in the phase variable,
    ``dtheta = (1 + lam sin theta) / beta dvarphi``, where the integrands are
    trigonometric polynomials times smooth factors.
    """
    lam, beta = basis.lam, basis.beta
    if system == "hf":
        labels = basis.labels(m_max)
        lefts = [basis.h(a) for a in labels]
        rights = [basis.f(b) for b in labels]
    elif system == "gf":
        ms = list(range(-m_max, m_max + 1))
        lefts = [(lambda th, m=m: basis.g(m, th)) for m in ms]
        rights = [(lambda th, m=m: basis.fbar(m, th)) for m in ms]
    else:
        raise ValueError(f"unknown system {system!r}")

    def integrand(ph):
        th = float(phase_inverse(ph, lam))
        jac = (1.0 + lam * math.sin(th)) / beta
        L = np.array([complex(np.asarray(fn(th))) for fn in lefts])
        R = np.array([complex(np.asarray(fn(th))) for fn in rights])
        G = np.outer(np.conj(L), R) * jac
        return np.concatenate([G.real.ravel(), G.imag.ravel()])

    val, err = integrate.quad_vec(integrand, -math.pi, math.pi, epsabs=1e-13, epsrel=1e-12,
                                  limit=400)
    if err > 1e-9:
        raise RuntimeError(f"gram quadrature did not converge (error estimate {err:.2e})")
    n = len(lefts)
    half = n * n
    return (val[:half] + 1j * val[half:]).reshape(n, n)


def density_series_sub(theta, t: float, basis: BiorthoBasis):
    """Continuous part ``P_f(theta, t)`` of the density started at ``theta = 0``.

    The quasi-delta sum over ``m`` is resummed: its delta goes to the atom and
    the finite remainder ``-(1 + 2 cos Phi)`` equals ``-sin(3 Phi/2)/sin(Phi/2)``
    including its limit 3 at ``Phi = 0``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    p = basis.p
    lam, beta, c = basis.lam, basis.beta, basis.c
    theta = np.asarray(theta, dtype=float)
    flat = np.atleast_1d(theta).ravel()
    x = p.gamma0 * t
    ph = phase(flat, lam)
    op2 = (1.0 + lam * np.sin(flat)) ** 2
    w = math.sqrt(4.0 - lam * lam)

    out = basis.f0(flat).astype(complex)
    out += 1j * lam * np.exp(2.0 * basis.nu_plus * x) / w * basis.f_bound(1, flat)
    out -= 1j * lam * np.exp(2.0 * basis.nu_minus * x) / w * basis.f_bound(-1, flat)

    ms = basis.tower
    coef = (-1.0) ** ms * lam / basis.B(ms) * np.exp(2.0 * basis.nu_m(ms) * x)
    series = np.empty(flat.shape, dtype=complex)
    for i in range(0, flat.size, 256):
        series[i:i + 256] = np.exp(1j * np.outer(ph[i:i + 256], ms)) @ coef
    out += c * c * series / op2

    Phi = ph - phase(0.0, lam) + 2.0 * x * beta
    out -= c * c * math.exp(-2.0 * lam * x) * (1.0 + 2.0 * np.cos(Phi)) / op2
    res = out.real.reshape(theta.shape)
    return float(res) if res.ndim == 0 else res


def spectral_snapshot(t: float, basis: BiorthoBasis) -> DistributionSnapshot:
    """Series density plus the analytic atom at ``theta_t(0, 0)``."""
    p = basis.p
    return DistributionSnapshot(t, float(flow_closed(t, 0.0, p)), float(survival(t, 0.0, p)),
                                lambda th: density_series_sub(th, t, basis),
                                (-math.pi, math.pi), p)


# -- generator on a grid ---------------------------------------------------------

@dataclass(frozen=True)
class GridFunction:
    """Values on Chebyshev points of ``[a, b]`` with their series coefficients."""

    a: float
    b: float
    nodes: np.ndarray
    values: np.ndarray
    coeffs: np.ndarray

    def __call__(self, theta):
        x = (2.0 * np.asarray(theta, dtype=float) - (self.a + self.b)) / (self.b - self.a)
        return cheb.chebval(x, self.coeffs)


def _cheb_nodes(n: int) -> np.ndarray:
    # first-kind points, descending; neither endpoint is sampled
    return np.cos(math.pi * (np.arange(n) + 0.5) / n)


def _cheb_coeffs(values: np.ndarray) -> np.ndarray:
    def real_coeffs(v):
        a = fft.dct(v, type=2) / v.size
        a[0] *= 0.5
        return a
    if np.iscomplexobj(values):
        return real_coeffs(values.real) + 1j * real_coeffs(values.imag)
    return real_coeffs(values)


def _grid_derivative(fn: Callable, n: int, a: float, b: float):
    x = _cheb_nodes(n)
    theta = 0.5 * (a + b) + 0.5 * (b - a) * x
    vals = np.asarray(fn(theta))
    d = cheb.chebval(x, cheb.chebder(_cheb_coeffs(vals))) * 2.0 / (b - a)
    return theta, vals, d


def apply_generator(fn: Callable, p: ModelParams, side: str = "forward", n: int = 4096,
                    interval: Tuple[float, float] = (-math.pi, math.pi)) -> GridFunction:
    """``L fn`` (side="forward") or ``L^+ fn`` (side="adjoint") on a Chebyshev grid.

    Chebyshev points cluster at both ends of ``interval`` and never touch them,
    so the one-sided limits at ``pi`` are resolved without crossing the jump.
    """
    a, b = interval
    theta, vals, d = _grid_derivative(fn, n, a, b)
    lam = p.lam
    op = 1.0 + lam * np.sin(theta)
    if side == "forward":
        out = op * d + lam * (2.0 * np.cos(theta) - 1.0) * vals
    elif side == "adjoint":
        h_pi = complex(np.asarray(fn(math.pi)))
        out = -op * d - 2.0 * lam * np.sin(0.5 * theta) ** 2 * (vals - h_pi)
    else:
        raise ValueError(f"unknown side {side!r}")
    return GridFunction(a, b, theta, out, _cheb_coeffs(out))


def generator_residual(fn: Callable, nu: complex, p: ModelParams, side: str = "forward",
                       n: int = 4096, interval: Tuple[float, float] = (-math.pi, math.pi)) -> float:
    """``sup |L fn - nu fn|`` on the grid (``conj(nu)`` for the adjoint)."""
    g = apply_generator(fn, p, side, n, interval)
    target = nu if side == "forward" else np.conj(nu)
    return float(np.max(np.abs(g.values - target * np.asarray(fn(g.nodes)))))


def jump_condition(fn: Callable, p: ModelParams, lower: float = -math.pi,
                   n: int = 512) -> Tuple[complex, complex]:
    """``(f(pi - 0) - f(-pi + 0), 2 lam int sin^2(theta/2) f)``.

    One-sided limits come from the Chebyshev interpolant on ``[lower, pi]``
    evaluated at its ends.  A function supported on ``[lower, pi]`` vanishes
    on ``(-pi, lower)``, so its value at ``lower`` stands for ``f(-pi + 0)``.
    """
    x = _cheb_nodes(n)
    theta = 0.5 * (lower + math.pi) + 0.5 * (math.pi - lower) * x
    coeffs = _cheb_coeffs(np.asarray(fn(theta)))
    jump = cheb.chebval(1.0, coeffs) - cheb.chebval(-1.0, coeffs)

    def part(kind):
        def integrand(th):
            v = complex(np.asarray(fn(th))) * math.sin(0.5 * th) ** 2
            return v.real if kind == 0 else v.imag
        return integrate.quad(integrand, lower, math.pi, epsabs=1e-13, epsrel=1e-12, limit=400)[0]

    return complex(jump), 2.0 * p.lam * complex(part(0), part(1))


# -- lam = 1 -----------------------------------------------------------------------

def _x_coord(theta):
    """``x = -2 / (1 + tan(theta/2))`` written with half-angles."""
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    with np.errstate(divide="ignore"):
        return -2.0 * c / (c + s)


def _cdiv_expm1(z_rate, k, a):
    """``(exp(-2 i x (k - a)) - 1) / (k - a)`` with the removable point handled."""
    d = k - a
    z = -2j * z_rate * d
    small = np.abs(d) < 1e-12
    safe = np.where(small, 1.0, d)
    return np.where(small, -2j * z_rate, np.expm1(z) / safe)


def coeff_ck(k, t: float, p: ModelParams, atom: bool = True):
    """Expansion coefficient ``c_k(t)`` of the density in the continuum basis.

    ``atom=False`` drops the ``exp(2 i k)`` term, whose transform is the
    never-clicked point mass.
    """
    _require(p, Regime.CRITICAL, "coeff_ck")
    k = np.asarray(k, dtype=complex)
    x = p.gamma0 * t
    nup, num = _bound_pair(1.0)
    r3 = math.sqrt(3.0)
    out = (1j * _cdiv_expm1(x, k, -1j) + num / r3 * _cdiv_expm1(x, k, 1j * num)
           - nup / r3 * _cdiv_expm1(x, k, 1j * nup))
    if atom:
        out = out + np.exp(2j * k)
    out = out / math.sqrt(2.0 * math.pi)
    return complex(out) if out.ndim == 0 else out


def _cauchy_derivative(fn: Callable, z0: complex, order: int, radius: float = 0.25,
                       n: int = 64) -> complex:
    """``d^order fn / dz^order`` at ``z0`` from the trapezoid rule on a circle."""
    w = np.exp(2j * math.pi * np.arange(n) / n)
    vals = np.array([fn(z0 + radius * wi) for wi in w])
    return complex(math.factorial(order) * np.mean(vals * w ** (-order)) / radius**order)


def ck_ode_residual(k: float, t: float, p: ModelParams) -> Tuple[float, float]:
    """Residuals of ``dc_k/dt = dc_0/dt e^{-2 i k gamma0 t}`` and of the ``dc_0/dt`` law.

    ``dc_0/dt = 4 gamma0 [((1 - gamma0 t) + (i/2) d/dk)^2 c_k]_{k=0}``.  All
    derivatives are contour integrals of ``c_k(t)``, which is entire in both
    ``k`` and ``t``.
    """
    g0 = p.gamma0
    dck = _cauchy_derivative(lambda z: coeff_ck(k, z, p), t, 1)
    dc0 = _cauchy_derivative(lambda z: coeff_ck(0.0, z, p), t, 1)
    c0 = coeff_ck(0.0, t, p)
    c1 = _cauchy_derivative(lambda z: coeff_ck(z, t, p), 0.0, 1)
    c2 = _cauchy_derivative(lambda z: coeff_ck(z, t, p), 0.0, 2)
    a = 1.0 - g0 * t
    law = 4.0 * g0 * (a * a * c0 + 1j * a * c1 - 0.25 * c2)
    return abs(dck - dc0 * np.exp(-2j * k * g0 * t)), abs(dc0 - law)


@dataclass(frozen=True)
class ContinuumBasis:
    """Improper eigenfunctions at ``lam = 1``, labelled by real ``k``."""

    p: ModelParams

    def nu(self, k):
        return -1.0 + 1j * np.asarray(k)

    def f(self, k, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp(1j * k * _x_coord(theta)) / (math.sqrt(2.0 * math.pi) * (1.0 + np.sin(theta)) ** 2)

    def g(self, k, theta):
        theta = np.asarray(theta, dtype=float)
        return (1.0 + np.sin(theta)) * np.exp(1j * k * _x_coord(theta)) / math.sqrt(2.0 * math.pi)

    def h(self, k, theta):
        """Adjoint eigenfunction with ``L^+ h_k = nu_{-k} h_k`` (``k != 0``)."""
        theta = np.asarray(theta, dtype=float)
        nmk = -1.0 - 1j * k
        extra = 1.0 / nmk - ((nmk + 1.0) * np.cos(theta) + np.sin(theta)) / (nmk * nmk + nmk + 1.0)
        return self.g(k, theta) + extra / math.sqrt(2.0 * math.pi)

    def h_improper(self, theta):
        """Improper adjoint eigenfunction at ``nu = -1``."""
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
        ratio = c / (c + s)  # 1 / (1 + tan(theta/2))
        return (1.0 + 2.0 / 3.0 * (3.0 * np.sin(theta) - np.cos(theta) + 5.0) * ratio) / math.sqrt(2.0 * math.pi)


def continuum_density(theta, t: float, p: ModelParams, K: Optional[float] = None,
                      tol: float = 1e-4, k_start: float = 25.0, k_limit: float = 3200.0,
                      y_max: float = 40.0):
    """Continuous part of ``P(theta, t)`` from ``int c_k e^{2 nu_k gamma0 t} f_k dk``.

    The ``k`` integral is damped with a Gaussian window of width ``K`` and
    summed with the trapezoid rule; ``K`` doubles until successive results
    differ by less than ``tol``.  With ``y = x(theta) + 2 gamma0 t`` the
    integrand oscillates like ``exp(i k y)``, so the node spacing is set from
    ``y_max``; angles with ``|y| > y_max`` (close to ``-pi/2``) are returned
    as ``nan``.  The continuous part jumps where ``y = 0`` and ``y = 2 gamma0 t``
    (the support edges); within a few ``1/K`` of them the windowed value is
    smeared, so convergence is judged away from those points.
    """
    _require(p, Regime.CRITICAL, "continuum_density")
    theta = np.asarray(theta, dtype=float)
    flat = np.atleast_1d(theta).ravel()
    x = p.gamma0 * t
    y = _x_coord(flat) + 2.0 * x
    ok = np.abs(y) <= y_max
    pref = math.exp(-2.0 * x) / (math.sqrt(2.0 * math.pi) * (1.0 + np.sin(flat[ok])) ** 2)
    dk = math.pi / (2.0 * (y_max + 2.0 * x + 1.0))

    def evaluate(width):
        span = 8.0 * width
        k = np.arange(-span, span + 0.5 * dk, dk)
        wgt = np.exp(-0.5 * (k / width) ** 2) * coeff_ck(k, t, p, atom=False) * dk
        acc = np.empty(int(ok.sum()))
        yy = y[ok]
        for i in range(0, yy.size, 64):
            acc[i:i + 64] = (np.exp(1j * np.outer(yy[i:i + 64], k)) @ wgt).real
        return acc * pref

    if K is not None:
        vals = evaluate(K)
    else:
        width, vals = k_start, evaluate(k_start)
        while True:
            width *= 2.0
            new = evaluate(width)
            # the window smears the two support edges over ~1/width
            far = np.minimum(np.abs(y[ok]), np.abs(y[ok] - 2.0 * x)) > 8.0 / width
            change = np.max(np.abs(new - vals)[far]) if far.any() else 0.0
            vals = new
            if change < tol:
                break
            if width >= k_limit:
                raise RuntimeError(f"k-window did not converge (last change {change:.2e})")
    out = np.full(flat.shape, np.nan)
    out[ok] = vals
    out = out.reshape(theta.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PointSpectrum:
    eigenvalues: Dict[str, complex]
    f: Dict[str, Callable]
    h: Dict[str, Callable]
    support: Tuple[float, float]


def point_spectrum_critical(p: ModelParams) -> PointSpectrum:
    """Discrete eigenvalues ``{0, nu_+, nu_-}`` at ``lam = 1``, supported on ``[-pi/2, pi]``."""
    _require(p, Regime.CRITICAL, "point_spectrum_critical")
    nup, num = _bound_pair(1.0)
    r3 = math.sqrt(3.0)

    def on_support(theta):
        theta = np.asarray(theta, dtype=float)
        return (theta >= -0.5 * math.pi) & (theta <= math.pi)

    def make_f(nu):
        def fn(theta):
            theta = np.asarray(theta, dtype=float)
            inside = on_support(theta) & (np.abs(theta + 0.5 * math.pi) > 0)
            x = np.where(inside, _x_coord(theta), -1.0)
            op2 = np.where(inside, (1.0 + np.sin(theta)) ** 2, 1.0)
            return np.where(inside, -nu * np.exp(-nu * x) / op2, 0.0)
        return fn

    def make_h(sign, nu):
        return lambda theta: -sign * 1j * (np.cos(theta) - nu * np.sin(np.asarray(theta))) / r3

    f0 = make_f(-1.0 + 0j)
    f = {"0": lambda th: f0(th).real, "+": make_f(num), "-": make_f(nup)}
    h = {"0": lambda th: np.ones_like(np.asarray(th, dtype=float)),
         "+": make_h(1, num), "-": make_h(-1, nup)}
    return PointSpectrum({"0": 0j, "+": nup, "-": num}, f, h, (-0.5 * math.pi, math.pi))


def spectral_gap(p: ModelParams) -> float:
    """Slowest decay rate ``-2 gamma0 Re nu_+ = lam gamma0`` of a nonzero mode."""
    if p.lam > 1:
        raise RegimeError("spectral theory is only available for lam <= 1")
    return -2.0 * p.gamma0 * _bound_pair(p.lam)[0].real
