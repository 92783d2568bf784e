"""Command-line front end.

Subcommands emit plot-ready CSV curves (header row ``name [unit]``) or JSON
summaries.  Settings come from flags, then an optional ``key = value`` config
file, then built-in defaults; the effective configuration is echoed in every
JSON output.  Exit codes: 0 ok, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import acceptance, counting, noclick, renewal, resolvent, spectral
from .model import ModelParams, Regime, RegimeError, make_params

SUBCOMMANDS = ("flow", "survival", "simulate", "counting", "density", "resolvent", "verify")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str = ""
    gamma0: float = 1.0
    gamma: Optional[float] = None
    lam: Optional[float] = None
    theta0: float = 0.0
    t: float = 2.0
    t_max: float = 10.0
    dt: float = 0.05
    n_traj: int = 10_000
    seed: int = 0
    bins: int = 250
    grid: int = 1024
    trunc_M: Optional[int] = None
    nodes: int = 32
    workers: int = 1
    out: Optional[str] = None
    format: str = "csv"
    quick: bool = False
    only: Optional[str] = None
    spec_file: Optional[str] = None
    explicit: frozenset = field(default=frozenset(), repr=False)  # keys set by file or flag

    def params(self) -> ModelParams:
        if (self.gamma is None) == (self.lam is None):
            raise UsageError("give exactly one of --gamma or --lambda")
        gamma = self.gamma if self.gamma is not None else 4.0 * self.gamma0 * self.lam
        try:
            return make_params(self.gamma0, gamma)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("explicit")
        d["lambda"] = d.pop("lam")
        return d


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"float": float, "int": int, "bool": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
          "str": str, "Optional[float]": float, "Optional[int]": int, "Optional[str]": str}


def _key(name: str) -> str:
    name = name.strip().replace("-", "_")
    return "lam" if name == "lambda" else name


def _cast(key: str, value):
    try:
        return _CASTS[_TYPES[key]](value)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad value {value!r} for {key}") from exc


def read_config_file(path: str) -> Dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = _key(k)
        if k not in _TYPES or k in ("subcommand", "explicit"):
            raise UsageError(f"{path}:{n}: unknown key {k!r}")
        out[k] = _cast(k, v)
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qreset", argument_default=argparse.SUPPRESS,
                                 description="Monitored-qubit resetting process: simulation and analytics.")
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value file; flags take precedence")
    common.add_argument("--gamma0", type=float, help="Rabi scale (default 1)")
    rate = common.add_mutually_exclusive_group()
    rate.add_argument("--gamma", type=float, help="measurement coupling")
    rate.add_argument("--lambda", dest="lam", type=float, help="gamma / (4 gamma0)")
    common.add_argument("--theta0", type=float, help="initial angle (default 0)")
    common.add_argument("--t", type=float, help="snapshot time (default 2)")
    common.add_argument("--t-max", dest="t_max", type=float, help="curve end time (default 10)")
    common.add_argument("--dt", type=float, help="curve time step (default 0.05)")
    common.add_argument("--n-traj", dest="n_traj", type=int, help="Monte Carlo trajectories")
    common.add_argument("--seed", type=int)
    common.add_argument("--bins", type=int, help="histogram bins (default 250)")
    common.add_argument("--grid", type=int, help="resolvent grid cells (default 1024)")
    common.add_argument("--trunc-M", dest="trunc_M", type=int, help="spectral truncation |m| <= M")
    common.add_argument("--nodes", type=int, help="contour nodes (default 32)")
    common.add_argument("--workers", type=int, help="threads for ensembles (output is unaffected)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    sub = ap.add_subparsers(dest="subcommand", required=True)
    helps = {
        "flow": "no-click angle theta_t and |a(t)|^2",
        "survival": "no-click probability S(t)",
        "simulate": "Monte Carlo ensemble: histogram, atom, mean count",
        "counting": "mean count, mean rate and P[N_t = n] for n <= 2",
        "density": "P(theta, t): renewal, spectral and Monte Carlo",
        "resolvent": "grid solution for a generator spec file",
        "verify": "run the acceptance suite",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name],
                            argument_default=argparse.SUPPRESS)
        if name == "verify":
            sp.add_argument("--quick", action="store_true", help="fewer trajectories and sub-cases")
            sp.add_argument("--only", help="comma-separated criterion numbers")
        if name == "resolvent":
            sp.add_argument("spec_file", help="key = value generator description")
    return ap


def build_config(argv: Sequence[str]) -> RunConfig:
    ns = vars(_parser().parse_args(list(argv)))
    cfg = RunConfig()
    merged: Dict[str, object] = {}
    if "config" in ns:
        merged.update(read_config_file(ns.pop("config")))
    flags = {k: v for k, v in ns.items()}
    if ("gamma" in flags) or ("lam" in flags):
        # a flag for either coupling replaces both file values
        merged.pop("gamma", None)
        merged.pop("lam", None)
    merged.update(flags)
    for k, v in merged.items():
        setattr(cfg, k, v)
    cfg.explicit = frozenset(merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    positive = {"t": cfg.t, "t_max": cfg.t_max, "dt": cfg.dt, "gamma0": cfg.gamma0}
    for k, v in positive.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise UsageError(f"{k} must be positive and finite")
    if cfg.n_traj < 0 or cfg.bins < 1 or cfg.nodes < 1 or cfg.workers < 1:
        raise UsageError("n_traj >= 0, bins >= 1, nodes >= 1 and workers >= 1 are required")
    if cfg.grid < 64:
        raise UsageError("grid needs at least 64 cells")
    if cfg.trunc_M is not None and cfg.trunc_M < 8:
        raise UsageError("trunc_M must be at least 8")
    if cfg.format not in ("csv", "json"):
        raise UsageError("format must be csv or json")


# -- output ------------------------------------------------------------------------

def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(columns: Dict[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    rows = zip(*(np.asarray(c, dtype=float) for c in columns.values()))
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _write(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _sidecar(path: str) -> str:
    return (path[:-4] if path.endswith(".csv") else path) + ".json"


def emit(cfg: RunConfig, columns: Dict[str, np.ndarray], meta: Optional[dict] = None):
    """Write a curve table; ``meta`` goes to a JSON sidecar (or a leading comment on stdout)."""
    if cfg.format == "json":
        doc = {"config": cfg.echo(), "columns": {k: np.asarray(v) for k, v in columns.items()}}
        if meta:
            doc["meta"] = meta
        _write(_dump_json(doc), cfg.out)
        return
    text = _csv_text(columns)
    if meta:
        side = {"config": cfg.echo(), **meta}
        if cfg.out is None:
            text = "# " + json.dumps(_jsonable(side), sort_keys=True) + "\n" + text
        else:
            _write(_dump_json(side), _sidecar(cfg.out))
    _write(text, cfg.out)


def _time_grid(cfg: RunConfig) -> np.ndarray:
    n = int(round(cfg.t_max / cfg.dt))
    return np.linspace(0.0, n * cfg.dt, n + 1)


# -- subcommands -------------------------------------------------------------------

def cmd_flow(cfg: RunConfig) -> int:
    p = cfg.params()
    t = _time_grid(cfg)
    theta = noclick.flow(t, 0.0, cfg.theta0, p)
    emit(cfg, {"t [1/gamma0]": t, "theta [rad]": theta, "a_sq [1]": np.cos(0.5 * theta) ** 2})
    return 0


def cmd_survival(cfg: RunConfig) -> int:
    p = cfg.params()
    t = _time_grid(cfg)
    emit(cfg, {"t [1/gamma0]": t, "S [1]": noclick.survival(t, cfg.theta0, p)})
    return 0


def cmd_counting(cfg: RunConfig) -> int:
    p = cfg.params()
    if cfg.theta0 != 0.0:
        raise UsageError("counting statistics are available for theta0 = 0 only")
    t = _time_grid(cfg)
    probs = np.array([counting.count_distribution(x, p)[:3] if x > 0 else [1.0, 0.0, 0.0]
                      for x in t])
    emit(cfg, {"t [1/gamma0]": t, "mean_count [1]": counting.mean_count(t, p),
               "mean_rate [gamma0]": counting.mean_rate(t, p), "p0 [1]": probs[:, 0],
               "p1 [1]": probs[:, 1], "p2 [1]": probs[:, 2]})
    return 0


def _ensemble(cfg: RunConfig, p: ModelParams):
    from .trajectory import TrajectoryConfig, ensemble
    tc = TrajectoryConfig(cfg.t, seed=cfg.seed, record_grid=(cfg.t,), bins=cfg.bins)
    return ensemble(cfg.theta0, cfg.n_traj, tc, p, workers=cfg.workers)


def cmd_simulate(cfg: RunConfig) -> int:
    from .trajectory import empirical_mean_count, histogram_with_atom
    p = cfg.params()
    if cfg.n_traj < 1:
        raise UsageError("simulate needs n_traj >= 1")
    st = _ensemble(cfg, p)
    est = histogram_with_atom(st, cfg.t)
    _, mean, se = empirical_mean_count(st)
    meta = {"atom_position": est.atom_position, "atom_mass": est.atom_mass,
            "atom_stderr": est.atom_se, "mean_count": mean[0], "mean_count_stderr": se[0],
            "t": cfg.t, "lambda": p.lam, "seed": cfg.seed, "n_traj": cfg.n_traj}
    width = np.diff(est.edges)
    emit(cfg, {"theta [rad]": est.centers, "mc_estimate [1/rad]": est.density,
               "mc_stderr [1/rad]": est.mass_se / width}, meta)
    return 0


def _spectral_column(theta: np.ndarray, cfg: RunConfig, p: ModelParams) -> np.ndarray:
    if cfg.theta0 != 0.0:
        return np.full(theta.shape, np.nan)
    if 0.0 < p.lam < 1.0:
        return spectral.density_series_sub(theta, cfg.t, spectral.build_basis_sub(p, cfg.trunc_M))
    if p.regime is Regime.CRITICAL:
        return spectral.continuum_density(theta, cfg.t, p)
    return np.full(theta.shape, np.nan)


def cmd_density(cfg: RunConfig) -> int:
    p = cfg.params()
    if cfg.theta0 != 0.0:
        raise UsageError("densities are available for theta0 = 0 only")
    edges = np.linspace(-math.pi, math.pi, cfg.bins + 1)
    theta = 0.5 * (edges[1:] + edges[:-1])
    snap = renewal.renewal_convolve(cfg.t, p)
    analytic = snap.continuous(theta)
    steady = renewal.steady_state(theta, p) if p.lam > 0 else np.zeros_like(theta)
    mc = se = np.full(theta.shape, np.nan)
    meta = {"atom_position": snap.atom_position, "atom_mass": snap.atom_mass, "t": cfg.t,
            "lambda": p.lam, "seed": cfg.seed, "n_traj": cfg.n_traj}
    if cfg.n_traj > 0:
        from .trajectory import histogram_with_atom
        est = histogram_with_atom(_ensemble(cfg, p), cfg.t, snap.atom_position)
        mc, se = est.density, est.mass_se / np.diff(edges)
        meta.update(mc_atom_mass=est.atom_mass, mc_atom_stderr=est.atom_se)
    emit(cfg, {"theta [rad]": theta, "analytic [1/rad]": analytic,
               "spectral [1/rad]": _spectral_column(theta, cfg, p),
               "mc_estimate [1/rad]": mc, "mc_stderr [1/rad]": se,
               "steady [1/rad]": steady}, meta)
    return 0


_SAFE = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "sqrt": np.sqrt,
         "abs": np.abs, "where": np.where, "pi": math.pi}


def _field(expr: str, consts: dict):
    """Compile an expression in ``theta`` (numpy functions only, no builtins)."""
    try:
        code = compile(expr, "<spec>", "eval")
    except SyntaxError as exc:
        raise UsageError(f"bad expression {expr!r}") from exc
    allowed = set(_SAFE) | set(consts) | {"theta"}
    bad = [n for n in code.co_names if n not in allowed]
    if bad:
        raise UsageError(f"unknown names {bad} in {expr!r}")
    return lambda th: eval(code, {"__builtins__": {}}, {**_SAFE, **consts, "theta": th})


def read_generator_spec(path: str, cfg: RunConfig):
    """Build a :class:`resolvent.GeneratorSpec` and start angle from a spec file.

    Keys: ``model = qubit`` (uses the coupling flags), or ``drift``,
    ``diffusion``, ``jump_rate`` as expressions in ``theta``; ``reset`` is
    ``uniform`` or an angle expression for a point mass (default ``pi``);
    ``theta_from`` (default 0).
    """
    entries: Dict[str, str] = {}
    try:
        with open(path) as fh:
            for n, line in enumerate(fh.read().splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{n}: expected key = value")
                k, v = (s.strip() for s in line.split("=", 1))
                entries[k] = v
    except OSError as exc:
        raise UsageError(f"cannot read spec file {path}: {exc}") from exc
    known = {"model", "drift", "diffusion", "jump_rate", "reset", "theta_from"}
    if set(entries) - known:
        raise UsageError(f"unknown spec keys {sorted(set(entries) - known)}")
    consts = {"gamma0": cfg.gamma0}
    theta_from = float(_field(entries.get("theta_from", "0"), consts)(0.0))
    if entries.get("model") == "qubit":
        p = cfg.params()
        return resolvent.GeneratorSpec.from_model(p), theta_from
    if "model" in entries:
        raise UsageError(f"unknown model {entries['model']!r}")
    if cfg.gamma is not None or cfg.lam is not None:
        p = cfg.params()
        consts.update(gamma=p.gamma, lam=p.lam)
    fields_ = {k: (_field(entries[k], consts) if k in entries else 0.0)
               for k in ("drift", "diffusion", "jump_rate")}
    reset = entries.get("reset", "pi")
    if reset == "uniform":
        measure = resolvent.ResetMeasure.uniform()
    else:
        measure = resolvent.ResetMeasure(atom=float(_field(reset, consts)(0.0)))
    return resolvent.GeneratorSpec(fields_["drift"], fields_["diffusion"], fields_["jump_rate"],
                                   measure), theta_from


def cmd_resolvent(cfg: RunConfig) -> int:
    spec, theta_from = read_generator_spec(cfg.spec_file, cfg)
    try:
        grid = resolvent.discretize(spec, cfg.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    v = resolvent.invert_laplace(theta_from, cfg.t, grid, nodes=cfg.nodes)
    meta = {"t": cfg.t, "theta_from": theta_from, "grid": cfg.grid, "nodes": cfg.nodes,
            "mass": resolvent.grid_mass(v, grid)}
    emit(cfg, {"theta [rad]": grid.centers, "density [1/rad]": v}, meta)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    only = None
    if cfg.only:
        try:
            only = [int(x) for x in cfg.only.split(",") if x.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --only list {cfg.only!r}") from exc
        if set(only) - set(acceptance.CRITERIA):
            raise UsageError(f"criteria are numbered 1..{len(acceptance.CRITERIA)}")
    n_traj = cfg.n_traj if "n_traj" in cfg.explicit else None
    seed = cfg.seed if "seed" in cfg.explicit else acceptance.MC_SEED
    results = acceptance.run_suite(quick=cfg.quick, only=only, n_traj=n_traj, seed=seed)
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed} passed, {failed} failed")
    summary = {"config": cfg.echo(), "results": [r.as_dict() for r in results],
               "passed": failed == 0}
    if cfg.format == "json":
        _write(_dump_json(summary), cfg.out)
    else:
        sys.stdout.write("\n".join(lines) + "\n")
        if cfg.out is not None:
            _write(_dump_json(summary), cfg.out)
    return 1 if failed else 0


COMMANDS = {"flow": cmd_flow, "survival": cmd_survival, "simulate": cmd_simulate,
            "counting": cmd_counting, "density": cmd_density, "resolvent": cmd_resolvent,
            "verify": cmd_verify}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = build_config(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for bad flags
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"qreset: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (UsageError, RegimeError) as exc:
        print(f"qreset: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
