"""Acceptance checks shared by ``qreset verify`` and the test-suite.

Each criterion function returns a list of :class:`CheckResult`, one per
measured quantity, so a report shows exactly which sub-case passed.
Monte Carlo ensembles are simulated once per ``lam`` and reused.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import integrate, linalg, stats

from . import counting, noclick, renewal, resolvent, spectral
from .model import ModelParams, params_from_lambda
from .trajectory import TrajectoryConfig, EnsembleStats, empirical_mean_count, ensemble

MC_TIMES = (0.5, 1.0, 2.0, 5.0)
MC_SEED = 20240611


@dataclass(frozen=True)
class CheckResult:
    criterion: int
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} [{self.criterion}] {self.name}: {self.measured:.3e} (tol {self.tolerance:.0e})"
        return text + (f"  {self.detail}" if self.detail else "")

    def as_dict(self) -> dict:
        return asdict(self)


def _check(criterion, name, measured, tolerance, detail="", passed=None) -> CheckResult:
    measured = float(measured)
    ok = bool(measured < tolerance) if passed is None else bool(passed)
    return CheckResult(criterion, name, measured, float(tolerance), ok, detail)


class MonteCarloPool:
    """Event-driven ensembles from ``theta0 = 0`` recorded at :data:`MC_TIMES`, one per lam."""

    def __init__(self, n_traj: int = 100_000, seed: int = MC_SEED):
        self.n_traj = n_traj
        self.seed = seed
        self._cache: Dict[float, EnsembleStats] = {}

    def get(self, lam: float) -> EnsembleStats:
        if lam not in self._cache:
            cfg = TrajectoryConfig(max(MC_TIMES), seed=self.seed, record_grid=MC_TIMES)
            self._cache[lam] = ensemble(0.0, self.n_traj, cfg, params_from_lambda(lam))
        return self._cache[lam]


# -- 1: survival identity ----------------------------------------------------------

def criterion_1(pool=None, quick=False) -> List[CheckResult]:
    out = []
    t = np.linspace(0.0, 10.0, 50)
    for lam in (0.25, 0.5, 1.0, 1.5, 3.0):
        p = params_from_lambda(lam)
        for th0 in (0.0, math.pi):
            exact = noclick.survival(t, th0, p)
            oracle = np.exp(-noclick.integrated_rate_numeric(t, th0, p))
            out.append(_check(1, f"survival identity lam={lam} theta0={th0:.4g}",
                              np.max(np.abs(exact - oracle)), 1e-8))
    return out


# -- 2: fastest decay at lam = 1 ---------------------------------------------------

def criterion_2(pool=None, quick=False) -> List[CheckResult]:
    crit = noclick.survival_from_ground(20.0, params_from_lambda(1.0))
    out = []
    for lam in (0.5, 1.5):
        other = noclick.survival_from_ground(20.0, params_from_lambda(lam))
        out.append(_check(2, f"S(20,1)/S(20,{lam})", crit / other, 1e-3))
    return out


# -- 3: mean count -----------------------------------------------------------------

def criterion_3(pool: MonteCarloPool, quick=False) -> List[CheckResult]:
    out = []
    for lam in (0.5, 1.0, 2.0, 3.0):
        p = params_from_lambda(lam)
        times, mean, se = empirical_mean_count(pool.get(lam))
        for t in (1.0, 2.0, 5.0):
            i = int(np.argmin(np.abs(times - t)))
            z = abs(mean[i] - counting.mean_count(t, p)) / se[i]
            out.append(_check(3, f"MC mean count lam={lam} t={t} (|z|)", z, 3.0,
                              f"n={pool.n_traj}"))
        r0 = counting.mean_rate(0.0, p)
        out.append(_check(3, f"mean_rate(0) lam={lam}", abs(r0), 0.0, passed=(r0 == 0.0)))
        late = abs(counting.mean_rate(20.0, p) - 0.5 * p.gamma)
        out.append(_check(3, f"|mean_rate(20) - gamma/2| lam={lam}", late, 1e-6))
    return out


# -- 4: MGF normalisation ----------------------------------------------------------

def criterion_4(pool=None, quick=False) -> List[CheckResult]:
    worst = 0.0
    for lam in (0.25, 0.5, 1.0, 1.5, 2.0, 3.0):
        p = params_from_lambda(lam)
        for t in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
            worst = max(worst, abs(counting.mgf(0.0, t, p) - 1.0))
    out = [_check(4, "max |mgf(0,t) - 1| over lam, t grid", worst, 1e-10)]
    for lam in (0.5, 1.5):
        p = params_from_lambda(lam)
        err = max(abs(sg * counting.mgf_laplace(sg, 0.0, p) - 1.0) for sg in (0.5, 1.0, 2.0))
        out.append(_check(4, f"sigma mgf_laplace(sigma,0) - 1 lam={lam}", err, 1e-12))
    return out


# -- 5: count distribution ---------------------------------------------------------

def criterion_5(pool: MonteCarloPool, quick=False) -> List[CheckResult]:
    out = []
    for lam in (0.5, 1.0, 1.5):
        p = params_from_lambda(lam)
        st = pool.get(lam)
        for t in (1.0, 2.0):
            freq = st.count_probabilities(t)
            zmax = 0.0
            for n in range(4):
                pn = counting.count_prob(n, t, p)
                se = math.sqrt(pn * (1.0 - pn) / st.n_traj)
                f = freq[n] if n < freq.size else 0.0
                zmax = max(zmax, abs(f - pn) / se)
            out.append(_check(5, f"P[n<=3] vs MC lam={lam} t={t} (max |z|)", zmax, 3.0))
            total = counting.count_distribution(t, p)[:13].sum()
            out.append(_check(5, f"|sum_(n<=12) P[n] - 1| lam={lam} t={t}", abs(total - 1.0), 1e-6))
    return out


# -- 6: densities against histograms -----------------------------------------------

def bin_masses(snap: renewal.DistributionSnapshot, edges: np.ndarray) -> np.ndarray:
    """Continuous mass in each bin, integrated in orbit time.

    The orbit of ``pi`` runs monotonically down in angle and, before it
    closes, crosses each angle once, so bin ``[a, b]`` collects the orbit
    times ``tau0(b) <= tau <= tau0(a)`` clipped to ``[0, t]``.
    """
    p, t = snap.params, snap.t
    if p.regime.value == "sub" and t >= renewal.period(p):
        raise ValueError("orbit-time binning needs a single pass of the orbit")
    tau_edges = np.full(edges.size, t)
    tau, _ = renewal._log_decay_and_tau(edges, p)
    tau_edges = np.where(np.isfinite(tau), np.minimum(tau, t), t)
    tau_edges[-1] = 0.0  # the right end pi is the start of the orbit
    out = np.empty(edges.size - 1)
    for j in range(out.size):
        lo, hi = tau_edges[j + 1], tau_edges[j]
        out[j] = 0.0 if hi <= lo else integrate.quad(snap.orbit_weight, lo, hi, epsabs=1e-14,
                                                     epsrel=1e-12, limit=200)[0]
    return out


def _binom_exceedances(n_bins: int, level: float = 3.0, alpha: float = 1e-3) -> int:
    """Largest count of ``level``-sigma exceedances expected among ``n_bins`` bins."""
    q = 2.0 * stats.norm.sf(level)
    return int(stats.binom.ppf(1.0 - alpha, n_bins, q))


def criterion_6(pool: MonteCarloPool, quick=False) -> List[CheckResult]:
    out = []
    for lam in (0.5, 1.0, 1.5):
        p = params_from_lambda(lam)
        st = pool.get(lam)
        n = st.n_traj
        for t in (0.5, 1.0, 2.0):
            snap = renewal.closed_snapshot(t, p)
            i = st.index(t)
            expected = bin_masses(snap, st.edges)
            observed = st.angle_hist[i] / n
            se = np.sqrt(expected * (1.0 - expected) / n)
            empty = expected == 0.0
            z = np.zeros_like(expected)
            z[~empty] = np.abs(observed[~empty] - expected[~empty]) / se[~empty]
            stray = int(np.count_nonzero(observed[empty]))
            n_out = int(np.count_nonzero(z > 3.0)) + stray
            allowed = _binom_exceedances(int(np.count_nonzero(~empty)))
            out.append(_check(6, f"bins beyond 3 SE lam={lam} t={t}", n_out, allowed,
                              f"max |z| {z.max():.2f}, {int((~empty).sum())} bins, "
                              f"{stray} hits outside support", passed=n_out <= allowed))
            counts, mean = st.angle_hist[i][~empty], n * expected[~empty]
            chi2 = float(np.sum((counts - mean) ** 2 / mean))
            pval = float(stats.chi2.sf(chi2, counts.size))
            out.append(_check(6, f"histogram chi-square p-value lam={lam} t={t}", pval, 1e-3,
                              f"chi2 {chi2:.1f} on {counts.size} bins", passed=pval > 1e-3))
            atom_mc = st.count_hist[i, 0] / n
            atom = snap.atom_mass
            z_atom = abs(atom_mc - atom) / math.sqrt(atom * (1.0 - atom) / n)
            out.append(_check(6, f"atom mass vs MC lam={lam} t={t} (|z|)", z_atom, 3.0))
            analytic = abs(atom - (1.0 - snap.continuous_mass()))
            analytic = max(analytic, abs(atom - float(noclick.survival_from_ground(t, p))))
            out.append(_check(6, f"atom mass analytic lam={lam} t={t}", analytic, 1e-8))
    return out


# -- 7: steady state ---------------------------------------------------------------

def fit_local_exponent(p: ModelParams, eps_lo: float = 1e-8, eps_hi: float = 1e-5) -> float:
    """Least-squares slope of ``log P_inf`` against ``log(theta - theta_+)``."""
    eps = np.logspace(math.log10(eps_lo), math.log10(eps_hi), 25)
    vals = renewal.steady_state(p.theta_plus + eps, p)
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def criterion_7(pool=None, quick=False) -> List[CheckResult]:
    out = []
    for lam in (0.3, 0.7, 1.0, 1.2, 2.0, 5.0):
        p = params_from_lambda(lam)
        out.append(_check(7, f"|int P_inf - 1| lam={lam}", abs(renewal.steady_state_mass(p) - 1.0),
                          1e-8))
    for lam in (1.1, 1.2, 2.0, 5.0):
        p = params_from_lambda(lam)
        tp = p.theta_plus
        # theta_+ itself is only known to rounding; stay a hair below it
        below = np.linspace(-math.pi + 1e-9, tp - 1e-12, 400)
        leak = float(np.max(np.abs(renewal.steady_state(below, p))))
        out.append(_check(7, f"P_inf outside (theta_+, pi] lam={lam}", leak, 0.0,
                          passed=(leak == 0.0)))
        fit, exact = fit_local_exponent(p), renewal.steady_state_exponent(p)
        out.append(_check(7, f"local exponent lam={lam} (fit {fit:.4f} vs {exact:.4f})",
                          abs(fit - exact) / abs(exact), 0.05))
    # the sign flips at lam = 2/sqrt(3): vanishing below, divergent above
    lam_c = 2.0 / math.sqrt(3.0)
    s_lo = fit_local_exponent(params_from_lambda(lam_c - 0.05))
    s_hi = fit_local_exponent(params_from_lambda(lam_c + 0.05))
    out.append(_check(7, "exponent sign change across lam=2/sqrt(3)", 0.0, 0.0,
                      f"fit {s_lo:.3f} below, {s_hi:.3f} above", passed=(s_lo > 0 > s_hi)))
    return out


# -- 8: spectral expansion for lam < 1 ---------------------------------------------

def criterion_8(pool=None, quick=False) -> List[CheckResult]:
    out = []
    p = params_from_lambda(0.5)
    basis = spectral.build_basis_sub(p, tol=1e-5)
    theta = np.linspace(-math.pi, math.pi, 513)[1:]
    for t in (0.5, 1.0, 2.0):
        series = spectral.density_series_sub(theta, t, basis)
        ref = renewal.renewal_density(theta, t, p)
        out.append(_check(8, f"series vs renewal sup-norm t={t} (M={basis.M})",
                          np.max(np.abs(series - ref)), 1e-3))
    for system in ("hf", "gf"):
        G = spectral.gram_check(basis, 12, system)
        out.append(_check(8, f"gram <{'h,f' if system == 'hf' else 'g,fbar'}> - I, |m|<=12",
                          np.max(np.abs(G - np.eye(G.shape[0]))), 1e-8))
    worst_f = worst_h = 0.0
    labels = basis.labels(12)
    for a in labels:
        nu = basis.eigenvalue(a)
        worst_f = max(worst_f, spectral.generator_residual(basis.f(a), nu, p, "forward"))
        worst_h = max(worst_h, spectral.generator_residual(basis.h(a), nu, p, "adjoint"))
    out.append(_check(8, "forward residual sup |L f - nu f|, |m|<=12", worst_f, 1e-6))
    out.append(_check(8, "adjoint residual sup |L+ h - nu* h|, |m|<=12", worst_h, 1e-6))
    return out


# -- 9: lam = 1 continuum ----------------------------------------------------------

def criterion_9(pool=None, quick=False) -> List[CheckResult]:
    out = []
    p = params_from_lambda(1.0)
    cb = spectral.ContinuumBasis(p)
    k = np.linspace(-20.0, 20.0, 81)
    # at t = 0 the coefficients are the projections of delta(theta) onto g_k
    c0 = spectral.coeff_ck(k, 0.0, p)
    out.append(_check(9, "c_k(0) vs <g_k, delta_0>", np.max(np.abs(c0 - np.conj(cb.g(k, 0.0)))),
                      1e-7))
    worst = 0.0
    for kk in (-3.0, -0.7, 0.0, 0.4, 2.5):
        for t in (0.3, 1.0, 2.0):
            worst = max(worst, *spectral.ck_ode_residual(kk, t, p))
    out.append(_check(9, "c_k ODE residual", worst, 1e-7))
    theta = np.linspace(-math.pi, math.pi, 513)[1:]
    for t in ((1.0,) if quick else (0.5, 1.0, 2.0)):
        rec = spectral.continuum_density(theta, t, p)
        ref = renewal.density_closed(theta, t, p)
        y = spectral._x_coord(theta) + 2.0 * t
        keep = np.isfinite(rec) & (np.abs(y) > 0.05) & (np.abs(y - 2.0 * t) > 0.05)
        out.append(_check(9, f"continuum reconstruction vs closed form t={t}",
                          np.max(np.abs(rec[keep] - ref[keep])), 1e-3,
                          f"{int(keep.sum())} of {theta.size} points"))
    return out


# -- 10: resolvent -----------------------------------------------------------------

def diffusion_reset_spec(D: float = 0.5, rate: float = 1.0) -> resolvent.GeneratorSpec:
    return resolvent.GeneratorSpec(0.0, D, rate, resolvent.ResetMeasure.uniform())


def time_step_oracle(grid: resolvent.GridOperator, v0: np.ndarray, t: float,
                     dt: float = 1e-2) -> np.ndarray:
    """Small-step exponential integrator for ``dv/dt = (L0 + L1) v`` (dense, small grids)."""
    A = grid.L0.toarray() + np.outer(grid.mu, grid.h * grid.gamma)
    steps = max(1, int(round(t / dt)))
    E = linalg.expm((t / steps) * A)
    v = v0.copy()
    for _ in range(steps):
        v = E @ v
    return v


def criterion_10(pool=None, quick=False) -> List[CheckResult]:
    out = []
    p = params_from_lambda(0.5)
    model = resolvent.GeneratorSpec.from_model(p)
    grid = resolvent.discretize(model, 4096, extrapolate=True)
    err = max(abs(resolvent.mean_rate_laplace(sg, 0.0, grid) - counting.mean_rate_laplace(sg, p))
              for sg in (0.5, 1.0, 2.0))
    out.append(_check(10, "mean_rate_laplace vs closed form lam=0.5 n=4096", err, 1e-4))

    diff = resolvent.discretize(diffusion_reset_spec(), 256)
    v0 = diff.point_mass(0.0)
    worst_mass = 0.0
    for t in (0.5, 1.0, 2.0):
        inv = resolvent.invert_laplace(0.0, t, diff, nodes=32)
        ref = time_step_oracle(diff, v0, t)
        out.append(_check(10, f"diffusion + uniform reset vs time stepping t={t}",
                          np.max(np.abs(inv - ref)), 1e-4))
        worst_mass = max(worst_mass, abs(resolvent.grid_mass(inv, diff) - 1.0))
    coarse = resolvent.discretize(model, 1024 if quick else 2048, extrapolate=True)
    for t in (0.5, 1.0, 2.0):
        inv = resolvent.invert_laplace(0.0, t, coarse, nodes=32)
        worst_mass = max(worst_mass, abs(resolvent.grid_mass(inv, coarse) - 1.0))
    out.append(_check(10, "mass conservation of inverted solutions", worst_mass, 1e-5))
    return out


# -- 11: relaxation rate -----------------------------------------------------------

def relaxation_fit(p: ModelParams, t_start: float = 6.0, periods: float = 4.0, n_t: int = 60,
                   n_theta: int = 512):
    """Decay rate of ``sup |P_c(., t) - P_inf|`` from a log-linear fit.

    The distance oscillates at the frequency of the slowest modes, so the
    window spans whole periods of ``2 pi / (gamma0 sqrt(4 - lam^2))``.
    """
    T = 2.0 * math.pi / (p.gamma0 * math.sqrt(4.0 - p.lam**2))
    ts = np.linspace(t_start, t_start + periods * T, n_t)
    theta = np.linspace(-math.pi, math.pi, n_theta + 1)[1:]
    ss = renewal.steady_state(theta, p)
    dist = np.array([np.max(np.abs(renewal.renewal_density(theta, t, p) - ss)) for t in ts])
    # fit the upper envelope: per-period maxima
    k = np.floor((ts - t_start) / T).astype(int)
    tm, dm = [], []
    for j in range(int(periods)):
        sel = k == j
        i = np.argmax(dist[sel])
        tm.append(ts[sel][i])
        dm.append(dist[sel][i])
    return float(-np.polyfit(tm, np.log(dm), 1)[0])


def criterion_11(pool=None, quick=False) -> List[CheckResult]:
    p = params_from_lambda(0.5)
    rate = relaxation_fit(p)
    gap = spectral.spectral_gap(p)
    return [_check(11, f"fitted relaxation rate {rate:.4f} vs lam gamma0 = {gap:.4f}",
                   abs(rate - gap) / gap, 0.05)]


CRITERIA: Dict[int, Callable] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11,
}


def run_suite(quick: bool = False, only: Optional[List[int]] = None, n_traj: Optional[int] = None,
              seed: int = MC_SEED, echo: Optional[Callable[[str], None]] = None) -> List[CheckResult]:
    """Run the selected criteria; ``quick`` uses 2 10^4 trajectories and fewer sub-cases."""
    pool = MonteCarloPool(n_traj or (20_000 if quick else 100_000), seed)
    results = []
    for c in sorted(only or CRITERIA):
        start = time.perf_counter()
        part = CRITERIA[c](pool, quick)
        if echo:
            for r in part:
                echo(r.line())
            echo(f"     [{c}] {time.perf_counter() - start:.1f}s")
        results.extend(part)
    return results
