"""Resetting processes on the circle through the resolvent.

The master equation

    dP/dt = L P - gamma(theta) P + mu(theta) <gamma, P>

splits as ``L0 = L - gamma`` and the rank-one ``L1 f = mu <gamma, f>``.  With
``x = (s - L0)^{-1} e`` and ``y = (s - L0)^{-1} mu`` the Laplace-domain
solution is ``x + y <gamma, x> / (1 - <gamma, y>)``, so every ``s`` costs two
sparse solves.  Pairings are bilinear, ``<f, g> = int f g``.

Grid: ``n`` periodic cells of width ``h = 2 pi / n`` centred at
``-pi + j h``, so ``pi`` (identified with ``-pi``) and ``0`` are cell
centres.  Vectors hold cell densities; total mass is ``h * sum``.
Drift uses first-order upwind fluxes, diffusion ``d^2 (D P)`` uses central
differences, so the matrix has non-negative off-diagonal entries and
columns summing to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from .model import ModelParams, click_rate, drift

Field = Union[float, Callable[[np.ndarray], np.ndarray]]


def _eval(field: Field, theta: np.ndarray) -> np.ndarray:
    if callable(field):
        return np.broadcast_to(np.asarray(field(theta), dtype=float), theta.shape).copy()
    return np.full(theta.shape, float(field))


@dataclass(frozen=True)
class ResetMeasure:
    """Where a jump lands: a point mass at ``atom`` or a normalised ``density``."""

    atom: Optional[float] = None
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if (self.atom is None) == (self.density is None):
            raise ValueError("give exactly one of atom or density")

    @staticmethod
    def uniform() -> "ResetMeasure":
        return ResetMeasure(density=lambda th: np.full(np.shape(th), 1.0 / (2.0 * math.pi)))


@dataclass(frozen=True)
class GeneratorSpec:
    drift: Field = 0.0
    diffusion: Field = 0.0
    jump_rate: Field = 0.0
    reset: ResetMeasure = ResetMeasure(atom=math.pi)

    @staticmethod
    def from_model(p: ModelParams) -> "GeneratorSpec":
        """Deterministic drift, clicks at rate ``gamma sin^2(theta/2)``, reset to ``pi``."""
        return GeneratorSpec(lambda th: drift(th, p), 0.0, lambda th: click_rate(th, p),
                             ResetMeasure(atom=math.pi))


def _cloud_in_cell(theta: float, n: int, h: float) -> np.ndarray:
    """Unit point mass shared linearly between the two nearest centres."""
    x = (float(theta) + math.pi) / h
    j = math.floor(x)
    w = x - j
    out = np.zeros(n)
    out[j % n] += (1.0 - w) / h
    out[(j + 1) % n] += w / h
    return out


@dataclass(frozen=True)
class GridOperator:
    """Discretised ``L0`` plus the rank-one data ``(mu, gamma)`` of ``L1``.

    ``coarse`` optionally holds the same problem on ``n / 2`` cells; results
    are then Richardson-extrapolated, ``2 x_n - x_{n/2}``, which cancels the
    leading ``O(h)`` error of the upwind fluxes.
    """

    n: int
    h: float
    centers: np.ndarray
    L0: sparse.csc_matrix
    mu: np.ndarray
    gamma: np.ndarray
    envelope: float
    coarse: Optional["GridOperator"] = None

    def pair(self, f: np.ndarray, g: np.ndarray):
        """Bilinear ``<f, g>`` on the grid."""
        return self.h * np.dot(f, g)

    def column_sums(self) -> np.ndarray:
        """``1^T (L0 + L1)`` in mass units; zero for a conservative scheme."""
        ones = np.ones(self.n)
        return self.h * (ones @ self.L0 + self.pair(ones, self.mu) * self.gamma)

    def point_mass(self, theta: float) -> np.ndarray:
        return _cloud_in_cell(theta, self.n, self.h)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``(L0 + L1) v``."""
        return self.L0 @ v + self.mu * self.pair(self.gamma, v)


def _build(spec: GeneratorSpec, n: int) -> GridOperator:
    h = 2.0 * math.pi / n
    centers = -math.pi + h * np.arange(n)
    faces = centers + 0.5 * h
    om = _eval(spec.drift, faces)
    D = _eval(spec.diffusion, centers)
    rate = _eval(spec.jump_rate, centers)
    if np.any(D < 0) or np.any(rate < 0):
        raise ValueError("diffusion and jump rate must be non-negative")
    if not (np.all(np.isfinite(om)) and np.all(np.isfinite(D)) and np.all(np.isfinite(rate))):
        raise ValueError("fields must be finite on the grid")

    j = np.arange(n)
    jp = (j + 1) % n
    pos, neg = np.maximum(om, 0.0) / h, np.minimum(om, 0.0) / h
    dh = D / (h * h)
    # flux through face j+1/2 leaves cell j and enters cell j+1
    rows = np.concatenate([j, j, jp, jp, j, jp, jp, j])
    cols = np.concatenate([j, jp, j, jp, j, j, jp, jp])
    vals = np.concatenate([-pos, -neg, pos, neg,
                           -dh, dh,       # D_j P_j diffuses from j to j+1
                           -dh[jp], dh[jp]])  # D_{j+1} P_{j+1} diffuses back
    L = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
    L0 = (L - sparse.diags(rate)).tocsc()

    reset = spec.reset
    if reset.atom is not None:
        mu = _cloud_in_cell(reset.atom, n, h)
    else:
        mu = _eval(reset.density, centers)
        if np.any(mu < 0):
            raise ValueError("reset density must be non-negative")
        mass = h * mu.sum()
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"reset measure must integrate to 1 (got {mass})")
        mu = mu / mass

    # spectrum of the frozen-coefficient scheme lies left of Re z = -(Im z)^2 / (2 R)
    with np.errstate(divide="ignore", invalid="ignore"):
        Dface = 0.5 * (D + D[jp])
        env = np.where(om != 0, om * om / (np.abs(om) * h + 2.0 * Dface), 0.0)
    return GridOperator(n, h, centers, L0, mu, rate, float(np.max(env, initial=0.0)))


def discretize(spec: GeneratorSpec, n: int, extrapolate: bool = False) -> GridOperator:
    """Finite-volume operator on ``n`` cells (``n >= 64``).

    ``extrapolate=True`` (``n`` even) attaches the ``n / 2`` grid for
    Richardson extrapolation.
    """
    if n < 64:
        raise ValueError("grid needs at least 64 cells")
    fine = _build(spec, n)
    if not extrapolate:
        return fine
    if n % 2:
        raise ValueError("extrapolation needs an even grid size")
    coarse = _build(spec, n // 2)
    return GridOperator(fine.n, fine.h, fine.centers, fine.L0, fine.mu, fine.gamma,
                        fine.envelope, coarse)


# -- Laplace domain ----------------------------------------------------------------

def _prolong(v: np.ndarray) -> np.ndarray:
    """Coarse centres sit on even fine centres; odd ones take the mean of neighbours."""
    out = np.empty(2 * v.size, dtype=v.dtype)
    out[0::2] = v
    out[1::2] = 0.5 * (v + np.roll(v, -1))
    return out


def _solve_single(s: complex, source: np.ndarray, grid: GridOperator):
    A = (complex(s) * sparse.identity(grid.n, dtype=complex, format="csc") - grid.L0).tocsc()
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise ZeroDivisionError(f"s - L0 is singular at s={s}") from exc
    x = lu.solve(source.astype(complex))
    y = lu.solve(grid.mu.astype(complex))
    den = 1.0 - grid.pair(grid.gamma, y)
    if abs(den) < 1e-12:
        raise ZeroDivisionError(f"1 - <gamma, y> vanishes at s={s}")
    return x, y, den


def _transition_single(s: complex, source: np.ndarray, grid: GridOperator) -> np.ndarray:
    x, y, den = _solve_single(s, source, grid)
    return x + y * grid.pair(grid.gamma, x) / den


def _source(theta_from: float, grid: GridOperator) -> np.ndarray:
    return grid.point_mass(theta_from)


def laplace_transition(s: complex, theta_from: float, grid: GridOperator) -> np.ndarray:
    """``(s - L0 - L1)^{-1}`` applied to a unit mass at ``theta_from``."""
    if complex(s).real <= 0:
        raise ValueError("Re(s) must be positive")
    out = _transition_single(s, _source(theta_from, grid), grid)
    if grid.coarse is not None:
        c = grid.coarse
        out = 2.0 * out - _prolong(_transition_single(s, _source(theta_from, c), c))
    return out


def mean_rate_laplace(s: complex, theta_from: float, grid: GridOperator) -> complex:
    """Laplace transform of the mean jump rate, ``<gamma, x> / (1 - <gamma, y>)``."""
    if complex(s).real <= 0:
        raise ValueError("Re(s) must be positive")

    def single(g):
        x, _, den = _solve_single(s, _source(theta_from, g), g)
        return g.pair(g.gamma, x) / den

    val = single(grid)
    if grid.coarse is not None:
        val = 2.0 * val - single(grid.coarse)
    return complex(val)


def denominator(s: complex, grid: GridOperator) -> complex:
    """``1 - <gamma, (s - L0)^{-1} mu>``."""
    return complex(_solve_single(s, grid.mu, grid)[2])


# -- inversion ---------------------------------------------------------------------

@dataclass(frozen=True)
class Contour:
    """Parabola ``s(x) = vertex - curvature x^2 + i x`` sampled at ``x_k = k step``."""

    vertex: float
    curvature: float
    step: float
    count: int

    def points(self):
        x = self.step * np.arange(self.count + 1)
        return x, self.vertex - self.curvature * x * x + 1j * x, 1j - 2.0 * self.curvature * x


def make_contour(t: float, nodes: int, envelope: float = 0.0, refine: int = 1) -> Contour:
    """Parabolic contour for time ``t``.

    With no drift this is the Weideman-Trefethen parabola
    ``s = m (1 + i u)^2``, ``m = pi N / (12 t)``, ``u_k = 3 k / N``.  Upwind
    drift puts eigenvalues near ``Re z = -(Im z)^2 / (2 R)``; the parabola is
    then flattened to curvature ``1 / (4 R)`` so the whole spectrum stays on
    its left, and extended until ``exp(s t)`` has decayed as far as on the
    standard contour.  ``refine`` divides the step on the same curve.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    m = math.pi * nodes / (12.0 * t)
    curv = 1.0 / (4.0 * m)
    if envelope > 2.0 * m:
        curv = 1.0 / (4.0 * envelope)
    step = math.pi / (2.0 * t)
    x_max = 3.0 * math.sqrt(m / curv)
    count = int(math.ceil(x_max / step))
    return Contour(m, curv, step / refine, count * refine)


def _invert_single(theta_from: float, t: float, grid: GridOperator, nodes: int,
                   refine: int = 1) -> np.ndarray:
    c = make_contour(t, nodes, grid.envelope, refine)
    x, s, ds = c.points()
    source = _source(theta_from, grid)
    acc = np.zeros(grid.n)
    for k in range(x.size):
        val = np.exp(s[k] * t) * ds[k] * _transition_single(s[k], source, grid) / (2j * math.pi)
        acc += (1.0 if k == 0 else 2.0) * val.real
    return c.step * acc


class InversionError(RuntimeError):
    pass


def invert_laplace(theta_from: float, t: float, grid: GridOperator, nodes: int = 32,
                   check: bool = True, tol: float = 1e-5) -> np.ndarray:
    """Time-domain density ``exp(t (L0 + L1))`` applied to a unit mass at ``theta_from``.

    With ``check=True`` the quadrature is repeated with twice as many nodes
    on the same contour; an :class:`InversionError` is raised if the two
    results differ by more than ``tol`` (max norm, relative to the largest
    value).  Refining the step keeps the contour, and with it the rounding
    amplification ``exp(vertex t)``, unchanged.
    """
    def combined(refine):
        out = _invert_single(theta_from, t, grid, nodes, refine)
        if grid.coarse is not None:
            out = 2.0 * out - _prolong(_invert_single(theta_from, t, grid.coarse, nodes, refine))
        return out

    out = combined(1)
    if check:
        ref = combined(2)
        change = np.max(np.abs(ref - out)) / max(1.0, np.max(np.abs(ref)))
        if change > tol:
            raise InversionError(f"contour inversion not converged: change {change:.2e} > {tol:.0e}")
    return out


def grid_mass(v: np.ndarray, grid: GridOperator):
    """``h * sum(v)``; complex for Laplace-domain vectors."""
    val = grid.h * np.sum(v)
    return complex(val) if np.iscomplexobj(v) else float(val)
