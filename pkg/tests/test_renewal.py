import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qreset import drift, fixed_points, params_from_lambda
from qreset.acceptance import bin_masses, fit_local_exponent
from qreset.counting import mean_rate
from qreset.model import RegimeError
from qreset.noclick import flow, survival
from qreset.renewal import (closed_snapshot, density_closed, density_matrix, period,
                            renewal_convolve, renewal_density, steady_snapshot, steady_state,
                            steady_state_exponent, steady_state_mass, support_lower, tau0)
from qreset.trajectory import TrajectoryConfig, ensemble, histogram_with_atom


def lower_edge(p):
    return -math.pi / 2 if p.lam == 1 else fixed_points(p).theta_plus


# -- tau0 ----------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5, 3.0])
def test_tau0_at_pi(lam):
    assert tau0(math.pi, params_from_lambda(lam)) == pytest.approx(0.0, abs=1e-15)


def test_tau0_critical_example():
    p = params_from_lambda(1.0)
    assert tau0(0.0, p) == pytest.approx(1.0, abs=1e-15)
    # gamma tau0 / 2 = 2 / (1 + tan(theta/2))
    for th in (-1.0, 0.5, 2.0):
        assert 0.5 * p.gamma * tau0(th, p) == pytest.approx(2 / (1 + math.tan(th / 2)), rel=1e-13)


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5])
def test_tau0_inverts_flow(lam):
    p = params_from_lambda(lam)
    lo = -math.pi if lam < 1 else lower_edge(p)
    th = np.linspace(lo + 1e-3, math.pi, 100)
    tau = tau0(th, p)
    d = np.abs(np.remainder(flow(tau, 0.0, math.pi, p) - th + math.pi, 2 * math.pi) - math.pi)
    assert d.max() < 1e-9


def test_tau0_super_power_form():
    """e^{-gamma tau0 / 2} as a power of the ratio built from tan(theta_+-/2)."""
    p = params_from_lambda(1.5)
    bp = p.beta_prime
    tp, tm = -p.lam + bp, -p.lam - bp  # tan(theta_+/2), tan(theta_-/2)
    for th in (-0.5, 0.4, 2.5):
        x = math.tan(th / 2)
        # the ratio tends to 1 at theta = pi, where tau0 = 0
        expected = ((x - tp) / (x - tm)) ** (p.lam / bp)
        assert math.exp(-0.5 * p.gamma * tau0(th, p)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("lam", [1.0, 1.5])
def test_tau0_rejects_unreachable(lam):
    p = params_from_lambda(lam)
    with pytest.raises(ValueError):
        tau0(lower_edge(p) - 0.1, p)


# -- steady state --------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.3, 0.7, 1.0, 1.2, 2.0, 5.0])
def test_steady_state_normalized(lam):
    assert abs(steady_state_mass(params_from_lambda(lam)) - 1.0) < 1e-8


def test_steady_state_rejects_no_measurement():
    with pytest.raises(ValueError):
        steady_state(0.0, params_from_lambda(0.0))


@pytest.mark.parametrize("lam", [1.0, 1.5, 3.0])
def test_steady_state_support(lam):
    p = params_from_lambda(lam)
    edge = lower_edge(p)
    outside = np.linspace(-math.pi + 1e-9, edge, 200)
    assert np.all(steady_state(outside, p) == 0.0)
    inside = np.linspace(edge + 1e-3, math.pi, 200)
    assert np.all(steady_state(inside, p) >= 0.0)
    # at lam = 1 the density vanishes like exp(-c / (theta + pi/2)) and underflows at the edge
    assert np.all(steady_state(inside[inside > edge + 0.2], p) > 0.0)


def test_steady_state_revisit_factor():
    """lam < 1: the geometric sum over revisits multiplies the single-pass density."""
    p = params_from_lambda(0.5)
    th = np.linspace(-3.0, 3.0, 13)
    single = p.lam * np.exp(-0.5 * p.gamma * tau0(th, p)) / (1 + p.lam * np.sin(th)) ** 2
    factor = 1 / (1 - math.exp(-2 * math.pi * p.lam / math.sqrt(1 - p.lam**2)))
    np.testing.assert_allclose(steady_state(th, p), factor * single, rtol=1e-13)


@pytest.mark.parametrize("lam", [1.1, 1.3])
def test_steady_state_local_exponent(lam):
    p = params_from_lambda(lam)
    e = steady_state_exponent(p)
    assert e == pytest.approx(lam / math.sqrt(lam**2 - 1) - 2)
    assert abs(fit_local_exponent(p, 1e-8, 1e-5) - e) < 0.05 * abs(e)


def test_steady_state_divergence_threshold():
    crit = 2 / math.sqrt(3)
    assert steady_state_exponent(params_from_lambda(crit - 0.05)) > 0
    assert steady_state_exponent(params_from_lambda(crit + 0.05)) < 0
    assert steady_state_exponent(params_from_lambda(crit)) == pytest.approx(0.0, abs=1e-12)
    # finite (zero) at the edge below the threshold, divergent above
    p = params_from_lambda(1.1)
    assert steady_state(fixed_points(p).theta_plus + 1e-9, p) < 1e-3
    p = params_from_lambda(1.5)
    assert steady_state(fixed_points(p).theta_plus + 1e-9, p) > 1e3


def test_steady_state_is_stationary():
    """d/dtheta(Omega P_inf) + alpha P_inf = 0 away from the reset point."""
    for lam in (0.5, 1.5):
        p = params_from_lambda(lam)
        th = np.linspace(lower_edge(p) + 0.2 if lam > 1 else -3.0, 3.0, 60)
        h = 1e-5
        flux = lambda x: drift(x, p) * steady_state(x, p)  # noqa: E731
        res = (flux(th + h) - flux(th - h)) / (2 * h) + p.gamma * np.sin(th / 2) ** 2 * steady_state(th, p)
        assert np.max(np.abs(res)) < 1e-6


# -- closed form vs renewal sum ------------------------------------------------------

@pytest.mark.parametrize("lam,t", [(0.5, 0.5), (0.5, 1.5), (0.5, 3.0), (1.0, 0.5), (1.0, 3.0),
                                   (1.5, 0.5), (1.5, 3.0), (3.0, 2.0)])
def test_closed_form_matches_renewal(lam, t):
    p = params_from_lambda(lam)
    th = np.linspace(-math.pi + 1e-6, math.pi, 1001)
    a, b = density_closed(th, t, p), renewal_density(th, t, p)
    assert np.max(np.abs(a - b)) < 1e-8


def test_closed_form_rejects_multi_visit():
    p = params_from_lambda(0.5)
    with pytest.raises(RegimeError):
        density_closed(0.0, 1.01 * period(p), p)


def test_atom_is_survival():
    for lam in (0.5, 1.0, 1.5):
        p = params_from_lambda(lam)
        for t in (0.5, 2.0):
            snap = renewal_convolve(t, p)
            assert snap.atom_mass == survival(t, 0.0, p)
            assert snap.atom_position == pytest.approx(flow(t, 0.0, 0.0, p), abs=1e-15)


@pytest.mark.parametrize("lam", [1.0, 1.5, 3.0])
def test_late_time_approaches_steady_state(lam):
    p = params_from_lambda(lam)
    th = np.linspace(lower_edge(p) + 0.05, math.pi, 400)
    assert np.max(np.abs(density_closed(th, 20.0, p) - steady_state(th, p))) < 1e-6


@pytest.mark.parametrize("lam", [0.3, 0.5, 1.0, 1.5, 3.0])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0, 20.0])
def test_snapshot_normalized(lam, t):
    assert abs(renewal_convolve(t, params_from_lambda(lam)).total_mass() - 1.0) < 1e-7


def test_multi_visit_normalization():
    p = params_from_lambda(0.5)
    t = 3 * math.pi / (p.beta * p.gamma0)
    snap = renewal_convolve(t, p)
    assert abs(snap.total_mass() - 1.0) < 1e-7
    # same integral directly in theta: the orbit has wrapped, so the density is smooth
    assert abs(snap.atom_mass + snap.continuous_mass_theta() - 1.0) < 1e-7


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5])
def test_theta_and_orbit_time_quadratures_agree(lam):
    snap = renewal_convolve(1.5, params_from_lambda(lam))
    assert abs(snap.continuous_mass() - snap.continuous_mass_theta()) < 1e-8


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.5, 3.0])
def test_mean_rate_from_density(lam):
    p = params_from_lambda(lam)
    for t in (0.7, 2.0):
        snap = renewal_convolve(t, p)
        rate = lambda x: p.gamma * np.sin(np.asarray(x) / 2) ** 2  # noqa: E731
        total = snap.continuous_mass(rate) + snap.atom_mass * rate(snap.atom_position)
        assert abs(total - mean_rate(t, p)) < 1e-6


@pytest.mark.parametrize("lam", [1.0, 1.5, 3.0])
def test_support_above_critical(lam):
    p = params_from_lambda(lam)
    for t in (0.5, 2.0, 8.0):
        lo = support_lower(t, p)
        assert lo >= lower_edge(p)
        outside = np.linspace(-math.pi + 1e-9, lo - 1e-9, 300)
        assert np.all(renewal_density(outside, t, p) == 0.0)


@pytest.mark.parametrize("lam,t", [(0.5, 1.5), (1.5, 1.0)])
def test_master_equation_residual(lam, t):
    p = params_from_lambda(lam)
    edge = support_lower(t, p)
    atom = flow(t, 0.0, 0.0, p)
    th = np.linspace(edge + 0.1, math.pi - 0.1, 200)
    th = th[np.abs(np.remainder(th - atom + math.pi, 2 * math.pi) - math.pi) > 0.1]
    ht, hx = 1e-4, 1e-4
    P = lambda x, s: renewal_density(x, s, p)  # noqa: E731
    dt = (P(th, t + ht) - P(th, t - ht)) / (2 * ht)
    dflux = (drift(th + hx, p) * P(th + hx, t) - drift(th - hx, p) * P(th - hx, t)) / (2 * hx)
    res = dt + dflux + p.gamma * np.sin(th / 2) ** 2 * P(th, t)
    assert np.max(np.abs(res)) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 6.0))
def test_density_nonnegative(lam, t):
    p = params_from_lambda(lam)
    th = np.linspace(-math.pi + 1e-9, math.pi, 500)
    assert np.all(renewal_density(th, t, p) >= 0.0)


def test_histogram_reproduction():
    """lam = 0.5, t = 2: per-bin agreement with 1e5 trajectories."""
    p = params_from_lambda(0.5)
    n = 100_000
    st_ = ensemble(0.0, n, TrajectoryConfig(2.0, seed=17, record_grid=(2.0,)), p)
    h = histogram_with_atom(st_, 2.0)
    exact = bin_masses(closed_snapshot(2.0, p), h.edges)
    se = np.sqrt(np.maximum(exact * (1 - exact), 1e-300) / n)
    z = np.abs(h.mass - exact) / se
    # three-sigma exceedances expected in ~0.27% of 250 bins
    assert np.sum(z[exact > 0] > 3) <= 4
    assert np.all(h.mass[exact == 0] == 0)
    assert abs(h.atom_mass - survival(2.0, 0.0, p)) < 3 * h.atom_se


# -- density matrix -------------------------------------------------------------------

def test_density_matrix_pure_ground():
    snap = renewal_convolve(0.0, params_from_lambda(0.5))
    np.testing.assert_allclose(density_matrix(snap), [[1, 0], [0, 0]], atol=1e-15)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_density_matrix_steady_is_maximally_mixed(lam):
    rho = density_matrix(steady_snapshot(params_from_lambda(lam)))
    np.testing.assert_allclose(rho, 0.5 * np.eye(2), atol=1e-3)


@pytest.mark.parametrize("lam", [0.5, 1.5])
@pytest.mark.parametrize("t", [0.3, 1.0, 4.0])
def test_density_matrix_is_a_state(lam, t):
    rho = density_matrix(renewal_convolve(t, params_from_lambda(lam)))
    assert abs(np.trace(rho) - 1.0) < 1e-10
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_density_matrix_matches_theta_quadrature():
    p = params_from_lambda(0.5)
    snap = renewal_convolve(1.0, p)
    rho = density_matrix(snap)
    f = lambda x: math.sin(x) * renewal_density(x, 1.0, p)  # noqa: E731
    es = integrate.quad(f, -math.pi, math.pi, points=[snap.breakpoints[0]], limit=400,
                        epsabs=1e-12)[0] + snap.atom_mass * math.sin(snap.atom_position)
    assert rho[1, 0].imag == pytest.approx(0.5 * es, abs=1e-9)
