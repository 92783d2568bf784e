import math

import numpy as np
import pytest
import scipy.sparse as sparse
from scipy.sparse.linalg import spsolve

from qreset import params_from_lambda
from qreset import counting
from qreset.acceptance import diffusion_reset_spec, time_step_oracle
from qreset.noclick import flow
from qreset.renewal import renewal_density, support_lower
from qreset.resolvent import (GeneratorSpec, InversionError, ResetMeasure, denominator, discretize,
                              grid_mass, invert_laplace, laplace_transition, make_contour,
                              mean_rate_laplace)


def heat_kernel(theta, t, D, terms=200):
    k = np.arange(1, terms + 1)
    return (1 + 2 * np.cos(np.outer(theta, k)) @ np.exp(-D * k * k * t)) / (2 * math.pi)


def resolvent_solve(grid, s, rhs):
    A = s * sparse.identity(grid.n, dtype=complex, format="csc") - grid.L0
    return spsolve(A.tocsc(), rhs.astype(complex))


# -- discretisation ---------------------------------------------------------------------

def test_zero_operator():
    g = discretize(GeneratorSpec(), 128)
    assert g.L0.count_nonzero() == 0
    assert np.all(g.gamma == 0)


@pytest.mark.parametrize("spec", [GeneratorSpec.from_model(params_from_lambda(0.5)),
                                  GeneratorSpec.from_model(params_from_lambda(1.5)),
                                  diffusion_reset_spec(),
                                  GeneratorSpec(lambda th: np.sin(th), lambda th: 0.2 + 0.1 * np.cos(th),
                                                lambda th: 1 + np.cos(th) ** 2, ResetMeasure(atom=0.37))])
def test_column_sums_vanish(spec):
    g = discretize(spec, 512)
    assert np.max(np.abs(g.column_sums())) < 1e-12


def test_drift_action_first_order():
    """Pure drift Omega = -2 gamma0: L0 P -> -d(Omega P)/dtheta = 2 P' with O(1/n) error."""
    errs = []
    for n in (256, 512, 1024):
        g = discretize(GeneratorSpec(drift=-2.0), n)
        P = 1 + 0.5 * np.cos(g.centers)
        exact = -np.sin(g.centers)  # 2 * dP/dtheta
        errs.append(np.max(np.abs(g.L0 @ P - exact)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.05)
    assert errs[-1] < 10.0 / 1024


def test_upwind_direction():
    g = discretize(GeneratorSpec(drift=-1.0), 64)
    A = g.L0.toarray()
    # negative drift: mass moves from cell j + 1 into cell j only
    assert A[0, 1] > 0 and A[1, 0] == 0


def test_discretize_rejects():
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(), 32)
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(), 129, extrapolate=True)
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(diffusion=-1.0), 128)
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(jump_rate=lambda th: np.cos(th)), 128)
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(reset=ResetMeasure(density=lambda th: np.ones_like(th))), 128)
    with pytest.raises(ValueError):
        discretize(GeneratorSpec(drift=lambda th: np.full_like(th, np.inf)), 128)
    with pytest.raises(ValueError):
        ResetMeasure()
    with pytest.raises(ValueError):
        ResetMeasure(atom=0.0, density=lambda th: th)


# -- Laplace domain ---------------------------------------------------------------------

def test_no_jumps_gives_plain_resolvent():
    g = discretize(GeneratorSpec(drift=lambda th: np.sin(th) - 1.5, diffusion=0.1), 256)
    s = 0.7 + 0.4j
    ref = resolvent_solve(g, s, g.point_mass(0.5))
    np.testing.assert_allclose(laplace_transition(s, 0.5, g), ref, atol=1e-12)
    assert mean_rate_laplace(s, 0.5, g) == 0


def test_rank_one_identity():
    """v = x + y <gamma, v> with x, y solved independently."""
    p = params_from_lambda(0.8)
    g = discretize(GeneratorSpec.from_model(p), 512)
    for s in (0.3, 1.0 + 2.0j):
        v = laplace_transition(s, 0.0, g)
        x = resolvent_solve(g, s, g.point_mass(0.0))
        y = resolvent_solve(g, s, g.mu)
        res = v - x - y * g.pair(g.gamma, v)
        assert np.max(np.abs(res)) < 1e-10 * np.max(np.abs(v))


def test_mass_in_laplace_domain():
    g = discretize(GeneratorSpec.from_model(params_from_lambda(1.5)), 512)
    for s in (0.2, 1.0, 3.0 - 1.0j):
        assert abs(grid_mass(laplace_transition(s, 0.0, g), g) - 1 / s) < 1e-10 / abs(s)


def test_denominator_positive_on_real_axis():
    for lam in (0.5, 1.0, 1.5):
        g = discretize(GeneratorSpec.from_model(params_from_lambda(lam)), 512)
        for s in np.logspace(-3, 2, 16):
            d = denominator(s, g)
            assert d.real > 0 and abs(d.imag) < 1e-12


def test_large_s_recovers_initial_condition():
    g = discretize(GeneratorSpec.from_model(params_from_lambda(0.5)), 256)
    e = g.point_mass(0.0)
    for s in (1e6, 1e8):
        err = np.max(np.abs(s * laplace_transition(s, 0.0, g) - e)) / np.max(e)
        assert err < 1e3 / s


def test_small_s_limit_is_steady_rate():
    p = params_from_lambda(0.5)
    g = discretize(GeneratorSpec.from_model(p), 2048, extrapolate=True)
    s = 1e-3
    assert abs(s * mean_rate_laplace(s, 0.0, g) - 0.5 * p.gamma) < 1e-3 * p.gamma


@pytest.fixture(scope="module")
def fine_half():
    p = params_from_lambda(0.5)
    return p, discretize(GeneratorSpec.from_model(p), 4096, extrapolate=True)


def test_mean_rate_matches_closed_form(fine_half):
    p, g = fine_half
    for s in (0.5, 1.0, 2.0):
        assert abs(mean_rate_laplace(s, 0.0, g) - counting.mean_rate_laplace(s, p)) < 1e-4
        assert abs(mean_rate_laplace(s, 0.0, g) - counting.mean_rate_laplace_resummed(s, p)) < 1e-4


def test_grid_convergence_drift_dominated():
    p = params_from_lambda(0.5)
    spec = GeneratorSpec.from_model(p)
    exact = counting.mean_rate_laplace(1.0, p)
    errs = [abs(mean_rate_laplace(1.0, 0.0, discretize(spec, n)) - exact) for n in (512, 1024, 2048)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 0.9)


def test_grid_convergence_diffusion_dominated():
    D, t = 0.5, 0.5
    errs = []
    for n in (64, 128, 256):
        g = discretize(GeneratorSpec(diffusion=D), n)
        v = invert_laplace(0.0, t, g)
        errs.append(np.max(np.abs(v - heat_kernel(g.centers, t, D))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_rejects_left_half_plane():
    g = discretize(GeneratorSpec.from_model(params_from_lambda(0.5)), 128)
    with pytest.raises(ValueError):
        laplace_transition(0.0, 0.0, g)
    with pytest.raises(ValueError):
        mean_rate_laplace(-1.0, 0.0, g)


@pytest.mark.slow
def test_super_critical_rate_diagnostic():
    """lam = 1.5: the density's power singularity at theta_+ slows grid convergence.

    Extrapolated n = 4096 errors were measured at 1.4e-4 (s = 0.5), 2.6e-5 (s = 1)
    and 1.9e-6 (s = 2); this pins those levels rather than the lam = 0.5 tolerance.
    """
    p = params_from_lambda(1.5)
    g = discretize(GeneratorSpec.from_model(p), 4096, extrapolate=True)
    for s, bound in ((0.5, 2e-4), (1.0, 5e-5), (2.0, 5e-6)):
        assert abs(mean_rate_laplace(s, 0.0, g) - counting.mean_rate_laplace(s, p)) < bound


# -- time domain -----------------------------------------------------------------------

def discrete_heat_kernel(n, t, D):
    """Exact solution of the central-difference scheme from a unit mass at theta = 0."""
    h = 2 * math.pi / n
    k = np.arange(n)
    rates = 4 * D / h**2 * np.sin(0.5 * k * h) ** 2
    centers = -math.pi + h * k
    return (np.cos(np.outer(centers, k)) @ np.exp(-rates * t)) / (2 * math.pi)


def test_heat_kernel_inversion():
    D, n = 0.3, 512
    g = discretize(GeneratorSpec(diffusion=D), n)
    for t in (0.5, 1.0, 2.0):
        v = invert_laplace(0.0, t, g)
        assert np.max(np.abs(v - discrete_heat_kernel(n, t, D))) < 1e-9
        assert abs(grid_mass(v, g) - 1.0) < 1e-5


def test_heat_kernel():
    D = 0.3
    g = discretize(GeneratorSpec(diffusion=D), 4096)
    for t in (0.5, 1.0, 2.0):
        v = invert_laplace(0.0, t, g)
        assert np.max(np.abs(v - heat_kernel(g.centers, t, D))) < 1e-6


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_diffusion_reset_vs_time_stepping(t):
    g = discretize(diffusion_reset_spec(), 256)
    v = invert_laplace(0.0, t, g)
    assert np.max(np.abs(v - time_step_oracle(g, g.point_mass(0.0), t))) < 1e-4
    assert abs(grid_mass(v, g) - 1.0) < 1e-5


def test_diffusion_reset_continuum_solution():
    """Uniform reset at constant rate r: P = e^{-rt} K_heat + (1 - e^{-rt}) / (2 pi)."""
    D, r, t = 0.5, 1.0, 1.0
    g = discretize(diffusion_reset_spec(D, r), 4096)
    v = invert_laplace(0.0, t, g)
    exact = math.exp(-r * t) * heat_kernel(g.centers, t, D) + (1 - math.exp(-r * t)) / (2 * math.pi)
    assert np.max(np.abs(v - exact)) < 1e-6


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_model_mass_conservation(t):
    g = discretize(GeneratorSpec.from_model(params_from_lambda(0.5)), 1024, extrapolate=True)
    assert abs(grid_mass(invert_laplace(0.0, t, g), g) - 1.0) < 1e-5


@pytest.mark.slow
def test_model_matches_renewal_above_critical():
    p = params_from_lambda(1.5)
    t = 1.0
    g = discretize(GeneratorSpec.from_model(p), 4096, extrapolate=True)
    v = invert_laplace(0.0, t, g)
    atom = float(flow(t, 0.0, 0.0, p))
    lo = support_lower(t, p)
    th = g.centers
    dist_atom = np.abs(np.remainder(th - atom + math.pi, 2 * math.pi) - math.pi)
    keep = (dist_atom > 0.3) & (th > lo + 0.3) & (th < math.pi - 0.3)
    assert keep.sum() > 1000
    assert np.max(np.abs(v[keep] - renewal_density(th[keep], t, p))) < 1e-3


def test_contour():
    c = make_contour(1.0, 32)
    x, s, ds = c.points()
    assert s[0].real == pytest.approx(math.pi * 32 / 12)
    np.testing.assert_allclose(s.imag, x)
    # flattened when the drift envelope is large
    flat = make_contour(1.0, 32, envelope=1e4)
    assert flat.curvature < c.curvature and flat.count > c.count
    with pytest.raises(ValueError):
        make_contour(0.0, 32)


def test_node_sweep_flags_non_convergence():
    g = discretize(GeneratorSpec(diffusion=0.3), 256)
    with pytest.raises(InversionError):
        invert_laplace(0.0, 1.0, g, nodes=2, tol=1e-14)
