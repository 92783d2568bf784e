"""Monte Carlo simulation of the drift-plus-reset process.

Trajectories are simulated in fixed-size chunks.  Chunk ``c`` owns the
generator ``PCG64(SeedSequence(seed, spawn_key=(c,)))`` and every round draws a
full chunk of uniforms, so the random numbers seen by trajectory ``i`` depend
only on ``(seed, i)``.  Results are therefore identical for any number of
workers and any scheduling order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import ModelParams, click_rate, drift, wrap
from .noclick import first_click_quantile, flow_closed

CHUNK = 8192
DEFAULT_BINS = 250


@dataclass(frozen=True)
class TrajectoryConfig:
    t_max: float
    scheme: str = "event_driven"  # or "euler"
    dt: Optional[float] = None
    seed: int = 0
    record_grid: Sequence[float] = ()
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if self.scheme not in ("event_driven", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "euler" and not (self.dt and self.dt > 0):
            raise ValueError("euler scheme needs dt > 0")
        grid = np.asarray(self.record_grid, dtype=float)
        if grid.size and (grid[0] < 0 or grid[-1] > self.t_max or np.any(np.diff(grid) <= 0)):
            raise ValueError("record_grid must be sorted, distinct and inside [0, t_max]")

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.record_grid, dtype=float)


@dataclass
class Trajectory:
    click_times: np.ndarray
    snapshot_times: np.ndarray
    snapshot_angles: np.ndarray

    @property
    def snapshots(self):
        return list(zip(self.snapshot_times.tolist(), self.snapshot_angles.tolist()))

    def count_at(self, t: float) -> int:
        """``N_t``: number of clicks in ``(0, t]``."""
        return int(np.searchsorted(self.click_times, t, side="right"))


@dataclass
class EnsembleStats:
    """Order-independent accumulators over an ensemble, one row per record time."""

    n_traj: int
    times: np.ndarray
    count_hist: np.ndarray  # [time, n] number of trajectories with N_t = n
    edges: np.ndarray
    angle_hist: np.ndarray  # [time, bin] counts of trajectories with N_t >= 1
    atom_position: np.ndarray
    post_click_min: np.ndarray  # smallest angle among clicked trajectories
    compensator_sum: np.ndarray = field(default=None)  # sum of int alpha dt (euler)
    compensator_sq: np.ndarray = field(default=None)

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not on the record grid")
        return i

    def count_probabilities(self, t: float) -> np.ndarray:
        return self.count_hist[self.index(t)] / self.n_traj

    def atom_count(self, t: float) -> int:
        return int(self.count_hist[self.index(t), 0])

    def sample_mgf(self, s: float, t: float):
        """Sample mean of ``exp(-s N_t)`` and its standard error."""
        p = self.count_probabilities(t)
        w = np.exp(-s * np.arange(p.size))
        m = float(p @ w)
        var = float(p @ w**2) - m * m
        return m, math.sqrt(max(var, 0.0) * self.n_traj / max(self.n_traj - 1, 1) / self.n_traj)


def _merge(a: EnsembleStats, b: EnsembleStats) -> EnsembleStats:
    w = max(a.count_hist.shape[1], b.count_hist.shape[1])
    ch = np.zeros((a.times.size, w), dtype=np.int64)
    ch[:, : a.count_hist.shape[1]] += a.count_hist
    ch[:, : b.count_hist.shape[1]] += b.count_hist
    comp = comp2 = None
    if a.compensator_sum is not None:
        comp, comp2 = a.compensator_sum + b.compensator_sum, a.compensator_sq + b.compensator_sq
    return EnsembleStats(a.n_traj + b.n_traj, a.times, ch, a.edges, a.angle_hist + b.angle_hist,
                         a.atom_position, np.minimum(a.post_click_min, b.post_click_min),
                         comp, comp2)


def _rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _uniform(rng: np.random.Generator) -> np.ndarray:
    # (0, 1]: u = 0 would ask for an infinite waiting time
    return 1.0 - rng.random(CHUNK)


# -- event-driven scheme -------------------------------------------------------

def _event_chunk(theta0: float, m: int, cfg: TrajectoryConfig, p: ModelParams, chunk: int,
                 keep_clicks: bool = False):
    """Simulate ``m <= CHUNK`` trajectories; returns counts and angles on the grid."""
    rng = _rng(cfg.seed, chunk)
    grid = cfg.grid
    R = grid.size
    counts = np.zeros((m, R), dtype=np.int64)
    angles = np.empty((m, R))
    t_cur = np.zeros(m)
    start = np.full(m, float(wrap(theta0)))
    n_clicks = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    clicks = [[] for _ in range(m)] if keep_clicks else None
    while active.size:
        u = _uniform(rng)[:m][active]
        if p.gamma == 0:
            tau = np.full(active.size, np.inf)
        else:
            tau = first_click_quantile(u, start[active], p)
        t_next = t_cur[active] + tau
        if R:
            inside = (grid[None, :] >= t_cur[active, None]) & (grid[None, :] < t_next[:, None])
            rows, cols = np.nonzero(inside)
            idx = active[rows]
            angles[idx, cols] = flow_closed(grid[cols] - t_cur[idx], start[idx], p)
            counts[idx, cols] = n_clicks[idx]
        clicked = t_next <= cfg.t_max
        hit = active[clicked]
        if keep_clicks:
            for i, tc in zip(hit, t_next[clicked]):
                clicks[i].append(tc)
        t_cur[hit] = t_next[clicked]
        start[hit] = math.pi
        n_clicks[hit] += 1
        active = hit
    return counts, angles, clicks


# -- Euler scheme ----------------------------------------------------------------

def _euler_chunk(theta0: float, m: int, cfg: TrajectoryConfig, p: ModelParams, chunk: int,
                 keep_clicks: bool = False):
    dt = float(cfg.dt)
    if dt * p.gamma > 0.1:
        raise ValueError("dt * gamma must not exceed 0.1")
    rng = _rng(cfg.seed, chunk)
    grid = cfg.grid
    R = grid.size
    n_steps = int(math.ceil(cfg.t_max / dt - 1e-9))
    # record time r is read after floor(r/dt + eps) steps
    rec_step = np.floor(grid / dt + 1e-9).astype(np.int64)
    counts = np.zeros((m, R), dtype=np.int64)
    angles = np.empty((m, R))
    comp = np.zeros((m, R))
    theta = np.full(m, float(wrap(theta0)))
    n_clicks = np.zeros(m, dtype=np.int64)
    integ = np.zeros(m)
    clicks = [[] for _ in range(m)] if keep_clicks else None
    r = 0
    for k in range(n_steps + 1):
        while r < R and rec_step[r] == k:
            counts[:, r], angles[:, r], comp[:, r] = n_clicks, theta, integ
            r += 1
        if k == n_steps:
            break
        u = _uniform(rng)[:m]
        rate = click_rate(theta, p)
        jump = u <= rate * dt
        integ += rate * dt
        theta = wrap(theta + drift(theta, p) * dt)
        theta[jump] = math.pi
        n_clicks += jump
        if keep_clicks:
            for i in np.nonzero(jump)[0]:
                clicks[i].append((k + 1) * dt)
    return counts, angles, clicks, comp


def _run_chunk(theta0, m, cfg, p, chunk, keep_clicks=False):
    if cfg.scheme == "event_driven":
        counts, angles, clicks = _event_chunk(theta0, m, cfg, p, chunk, keep_clicks)
        comp = None
    else:
        counts, angles, clicks, comp = _euler_chunk(theta0, m, cfg, p, chunk, keep_clicks)
    return counts, angles, clicks, comp


def simulate(theta0: float, config: TrajectoryConfig, p: ModelParams) -> Trajectory:
    """One realisation: the trajectory with index 0 of an ensemble with the same seed."""
    counts, angles, clicks, _ = _run_chunk(theta0, 1, config, p, 0, keep_clicks=True)
    return Trajectory(np.asarray(clicks[0]), config.grid.copy(), angles[0].copy())


def _stats_from_chunk(theta0, counts, angles, comp, cfg, p) -> EnsembleStats:
    grid = cfg.grid
    R = grid.size
    edges = np.linspace(-math.pi, math.pi, cfg.bins + 1)
    width = int(counts.max()) + 1 if counts.size else 1
    ch = np.zeros((R, width), dtype=np.int64)
    hist = np.zeros((R, cfg.bins), dtype=np.int64)
    pmin = np.full(R, np.inf)
    atom = np.full(R, np.nan)
    for r in range(R):
        ch[r] = np.bincount(counts[:, r], minlength=width)
        off = counts[:, r] > 0
        hist[r] = np.histogram(angles[off, r], bins=edges)[0]
        if off.any():
            pmin[r] = angles[off, r].min()
        if (~off).any():
            atom[r] = angles[~off, r][0]
    c1 = c2 = None
    if comp is not None:
        c1, c2 = comp.sum(axis=0), (comp**2).sum(axis=0)
    return EnsembleStats(counts.shape[0], grid.copy(), ch, edges, hist, atom, pmin, c1, c2)


def ensemble(theta0: float, n: int, config: TrajectoryConfig, p: ModelParams,
             workers: int = 1) -> EnsembleStats:
    """Simulate ``n`` independent trajectories and accumulate their statistics."""
    if n < 1:
        raise ValueError("n must be at least 1")
    sizes = [min(CHUNK, n - c * CHUNK) for c in range((n + CHUNK - 1) // CHUNK)]

    def job(c):
        counts, angles, _, comp = _run_chunk(theta0, sizes[c], config, p, c)
        return _stats_from_chunk(theta0, counts, angles, comp, config, p)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    out = parts[0]
    for part in parts[1:]:
        out = _merge(out, part)
    # the atom sits on the deterministic orbit; fill times where no trajectory was left there
    missing = np.isnan(out.atom_position)
    if config.scheme == "event_driven" and missing.any():
        out.atom_position[missing] = flow_closed(out.times[missing], theta0, p)
    return out


# -- summaries -------------------------------------------------------------------

@dataclass(frozen=True)
class HistogramEstimate:
    t: float
    atom_position: float
    atom_mass: float
    atom_se: float
    edges: np.ndarray
    mass: np.ndarray  # probability per bin
    mass_se: np.ndarray
    atom_offset: float  # |recorded atom angle - predicted|

    @property
    def density(self) -> np.ndarray:
        return self.mass / np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def histogram_with_atom(stats: EnsembleStats, t: float,
                        predicted_atom: Optional[float] = None) -> HistogramEstimate:
    """Split the ensemble at ``t`` into the never-clicked atom and a binned remainder."""
    i = stats.index(t)
    n = stats.n_traj
    atom_mass = stats.count_hist[i, 0] / n
    mass = stats.angle_hist[i] / n
    recorded = float(stats.atom_position[i])
    pos = recorded if predicted_atom is None else float(predicted_atom)
    offset = 0.0 if predicted_atom is None or np.isnan(recorded) else abs(
        math.remainder(recorded - predicted_atom, 2 * math.pi))
    return HistogramEstimate(float(stats.times[i]), pos, atom_mass,
                             math.sqrt(atom_mass * (1 - atom_mass) / n), stats.edges, mass,
                             np.sqrt(mass * (1 - mass) / n), offset)


def empirical_mean_count(stats: EnsembleStats):
    """Pointwise sample mean of ``N_t`` and its standard error, as ``(times, mean, se)``."""
    k = np.arange(stats.count_hist.shape[1])
    n = stats.n_traj
    m1 = stats.count_hist @ k / n
    m2 = stats.count_hist @ (k * k) / n
    var = np.maximum(m2 - m1**2, 0.0) * (n / max(n - 1, 1))
    return stats.times.copy(), m1, np.sqrt(var / n)


def compensator_mean_count(stats: EnsembleStats):
    """Mean of ``int_0^t alpha(theta_s) ds`` (euler runs); same expectation as ``N_t``."""
    if stats.compensator_sum is None:
        raise ValueError("compensator is only accumulated by the euler scheme")
    n = stats.n_traj
    m1 = stats.compensator_sum / n
    var = np.maximum(stats.compensator_sq / n - m1**2, 0.0) * (n / max(n - 1, 1))
    return stats.times.copy(), m1, np.sqrt(var / n)


def euler_chain_mean_count(t: float, dt: float, theta0: float, p: ModelParams) -> float:
    """Exact ``E[N_t]`` of the euler Markov chain, by a renewal recursion over steps.

    After ``j`` steps without a jump the chain sits at the ``j``-th euler
    iterate of its start, so its law is a distribution over "steps since the
    last reset" and can be propagated without sampling.
    """
    n = int(math.ceil(t / dt - 1e-9))

    def orbit(th):
        out = np.empty(n + 1)
        out[0] = th
        for j in range(n):
            out[j + 1] = wrap(out[j] + drift(out[j], p) * dt)
        return out

    q0 = np.minimum(click_rate(orbit(float(theta0)), p) * dt, 1.0)
    qp = np.minimum(click_rate(orbit(math.pi), p) * dt, 1.0)
    alive0 = 1.0  # never reset, at orbit0[k]
    w = np.zeros(n + 1)  # mass at orbit_pi[j]
    mean = 0.0
    for k in range(n):
        jump0 = alive0 * q0[k]
        jumps = w[: k + 1] * qp[: k + 1]
        total = jump0 + jumps.sum()
        mean += total
        w[1 : k + 2] = w[: k + 1] - jumps
        w[0] = total
        alive0 -= jump0
    return mean
