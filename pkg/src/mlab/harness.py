"""Study orchestration: config files, worker pools, fits and persistence.

A study is a single JSON document,

    {
      "study": "exit-scaling",
      "seed": 1,
      "landscape": {"name": "multiwell-r1"},
      "noise": {"kind": "signed-pareto", "alpha": 1.2, "c": 0.1, "p_plus": 0.5},
      "params": { ...study-specific block... }
    }

with unknown keys rejected everywhere.  Every emitted file embeds the package
version and a hash of the resolved config; re-running the same config with
the same seed reproduces each output byte for byte.
"""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import multiprocessing
import os
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from ._rng import (PURPOSE_EXIT, PURPOSE_INJECT_LB, PURPOSE_INJECT_SB,
                   PURPOSE_OCCUPANCY, PURPOSE_SHARPNESS, stream)
from .errors import AllCensored, ConfigError, InsufficientPoints
from .graph import build_graph, jump_profile, require_assumption3, scaling_exponent, summary_dict
from .injection import InjectionConfig, make_problem, run_plain_sb, run_two_phase, expected_sharpness
from .landscape import (SADDLE, Landscape1D, Landscape2D, builtin_multiwell1d,
                        field_of, find_critical_points)
from .landscape import from_spec as landscape_from_spec
from .limit import FLOW_DT, ctmc_generator, dtmc, estimate_table, mc_estimate_rates
from .noise import from_spec as noise_from_spec
from .sgd import SgdConfig, run_occupancy, run_until_exit

ETA_GRID_DEFAULT = (4e-3, 2e-3, 1e-3, 5e-4)
# exit times grow like (1/eta)^(1+(alpha-1)l*), so the three-jump regime gets
# a grid shifted one octave up to keep desk-scale runtimes
ETA_GRID_COARSE = (1.6e-2, 8e-3, 4e-3, 2e-3)

STUDY_KINDS = ("exit-scaling", "occupancy", "graph", "rates",
               "ctmc-compare", "inject-demo", "r2-sim")

_PARAM_KEYS = {
    "exit-scaling": ({"x0"}, {"regimes", "replications", "max_steps"}),
    "occupancy": ({"x0", "eta", "b"}, {"n_steps", "n_paths", "record_stride"}),
    "graph": ({"b"}, set()),
    "rates": ({"b"}, {"fields", "n_samples", "w_min", "T_max", "dt", "class_index"}),
    "ctmc-compare": ({"x0", "eta", "b"}, {"field", "replications", "max_steps", "rates"}),
    "inject-demo": (set(), {"problem", "eta", "b", "c", "alpha", "sb", "sb_star",
                            "lb", "mode", "phase1", "phase2", "theta0", "n_seeds",
                            "delta", "n_draws"}),
    "r2-sim": ({"x0", "eta", "b"}, {"n_steps", "record_stride", "visit_radius"}),
}

# studies that simulate and therefore need a noise block
_NOISE_REQUIRED = {"exit-scaling", "occupancy", "rates", "ctmc-compare", "r2-sim"}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated study description plus the raw document it came from."""

    study: str
    seed: int
    landscape: dict | None
    noise: dict | None
    params: dict
    raw: dict


def _check_keys(d, required, optional, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    extra = set(d) - set(required) - set(optional)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def load_config(source, seed_override=None) -> ExperimentConfig:
    """Read and validate a study config from a path or an in-memory dict."""
    if isinstance(source, dict):
        doc = json.loads(json.dumps(source))  # defensive deep copy
    else:
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    _check_keys(doc, {"study"}, {"seed", "landscape", "noise", "params"}, "config")
    study = doc["study"]
    if study not in STUDY_KINDS:
        raise ConfigError(f"unknown study kind {study!r}; expected one of {list(STUDY_KINDS)}")
    if seed_override is not None:
        doc["seed"] = int(seed_override)
    seed = int(doc.get("seed", 0))
    params = doc.get("params", {})
    required, optional = _PARAM_KEYS[study]
    _check_keys(params, required, optional, f"params ({study})")
    land_spec = doc.get("landscape")
    noise_spec = doc.get("noise")
    if noise_spec is None and study in _NOISE_REQUIRED:
        raise ConfigError(f"study {study!r} needs a noise block")
    if noise_spec is not None and study == "inject-demo":
        raise ConfigError("inject-demo draws its own multiplier; drop the noise block")
    # fail fast on unresolvable references
    if land_spec is not None:
        landscape_from_spec(land_spec)
    if noise_spec is not None:
        noise_from_spec(noise_spec)
    return ExperimentConfig(study=study, seed=seed, landscape=land_spec,
                            noise=noise_spec, params=params, raw=doc)


# ---------------------------------------------------------------------------
# Version and hash stamping
# ---------------------------------------------------------------------------

_VERSION = None


def describe_version() -> str:
    """Package version, suffixed with the git commit when one is visible."""
    global _VERSION
    if _VERSION is None:
        try:
            from importlib.metadata import version
            base = version("mlab")
        except Exception:
            base = "0.1.0"
        tag = f"v{base}"
        try:
            out = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                cwd=Path(__file__).resolve().parent, capture_output=True,
                text=True, timeout=10)
            if out.returncode == 0 and out.stdout.strip():
                tag = f"v{base}+g{out.stdout.strip()}"
        except (OSError, subprocess.SubprocessError):
            pass
        _VERSION = tag
    return _VERSION


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _write_csv(path, columns, rows, raw):
    with open(path, "w", newline="") as fh:
        fh.write(f"# mlab {describe_version()} config={config_hash(raw)}\n")
        wr = csv.writer(fh)
        wr.writerow(columns)
        wr.writerows(rows)


def _write_json(path, payload, raw):
    doc = {"meta": {"version": describe_version(), "config_hash": config_hash(raw)}}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(out_dir):
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# Worker pool
# ---------------------------------------------------------------------------

def resolve_threads(threads=None) -> int:
    """MLAB_THREADS beats the explicit argument, which beats cpu_count()."""
    env = os.environ.get("MLAB_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"MLAB_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("MLAB_THREADS must be at least 1")
        return n
    if threads is not None:
        if int(threads) < 1:
            raise ConfigError("threads must be at least 1")
        return int(threads)
    return os.cpu_count() or 1


def _parallel_map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    _kernels.warmup()  # compile before fork so workers inherit warm kernels
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:  # pragma: no cover - non-forking platform
        ctx = None
    with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(threads, len(tasks)), mp_context=ctx) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def _landscape_1d(cfg: ExperimentConfig):
    land = landscape_from_spec(cfg.landscape or {"name": "multiwell-r1"})
    if not isinstance(land, Landscape1D):
        raise ConfigError(f"study {cfg.study!r} needs a 1-D landscape")
    return land, find_critical_points(land)


def _b_eff(value):
    return math.inf if value is None else float(value)


def _b_json(b):
    return None if math.isinf(b) else b


# ---------------------------------------------------------------------------
# Power-law fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerlawFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    n: int


def fit_powerlaw(pairs) -> PowerlawFit:
    """Least squares of log(mean exit time) on log(1/eta).

    ``pairs`` is an iterable of (eta, mean_time); at least three points are
    required for a residual-based standard error.
    """
    pts = [(float(e), float(t)) for e, t in pairs]
    if len(pts) < 3:
        raise InsufficientPoints(f"power-law fit needs at least 3 points, got {len(pts)}")
    for e, t in pts:
        if e <= 0 or t <= 0:
            raise ConfigError("fit points must have positive eta and positive mean time")
    x = np.log([1.0 / e for e, _ in pts])
    y = np.log([t for _, t in pts])
    n = x.size
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise ConfigError("fit needs at least two distinct eta values")
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    s2 = float(np.sum(resid ** 2)) / (n - 2)
    slope_se = math.sqrt(s2 / sxx)
    intercept_se = math.sqrt(s2 * (1.0 / n + xbar ** 2 / sxx))
    return PowerlawFit(slope=slope, intercept=intercept, slope_se=slope_se,
                       intercept_se=intercept_se, n=int(n))


def ks_exponential(samples) -> float:
    """Kolmogorov-Smirnov distance between samples and the unit exponential."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ConfigError("KS distance needs at least one sample")
    cdf = 1.0 - np.exp(-x)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - cdf), np.max(cdf - lo)))


# ---------------------------------------------------------------------------
# Exit-time scaling study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    """Fitted exit-time exponent for one clipping regime."""

    b: float  # math.inf means unclipped
    l_star: int
    predicted: float | None
    etas: tuple
    mean_exit: tuple
    censored: tuple
    replications: int
    used_etas: tuple
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float


@dataclass(frozen=True)
class ExitScalingResult:
    field: int
    x0: float
    fits: tuple
    rows: tuple


def _exit_worker(task):
    land, points, noise, x0, field, eta, b, max_steps, seed, key = task
    cfg = SgdConfig(eta=eta, b=b, max_steps=max_steps)
    rng = stream(seed, PURPOSE_EXIT, *key)
    rec = run_until_exit(land, points, noise, cfg, x0, k=field, rng=rng)
    return rec.exit_step, rec.censored, rec.dest_field, rec.exit_position


def study_exit_scaling(cfg: ExperimentConfig, out_dir=None, threads=None) -> ExitScalingResult:
    """Mean first-exit times over an eta grid, per clipping regime, with fits."""
    land, points = _landscape_1d(cfg)
    noise = noise_from_spec(cfg.noise)
    p = cfg.params
    x0 = float(p["x0"])
    field = field_of(points, x0)
    if field is SADDLE:
        raise ConfigError("x0 sits exactly on a saddle")
    reps = int(p.get("replications", 20))
    if reps < 1:
        raise ConfigError("replications must be positive")
    max_steps = int(p.get("max_steps", 50_000_000))
    regime_specs = p.get("regimes", [{"b": None}, {"b": 0.5}, {"b": 0.28}])
    if not regime_specs:
        raise ConfigError("at least one clipping regime is required")

    regimes = []
    for rs in regime_specs:
        _check_keys(rs, set(), {"b", "etas"}, "regime")
        b = _b_eff(rs.get("b"))
        profile = jump_profile(points, b)
        require_assumption3(profile, (field,))
        l = int(profile.l_star[field - 1])
        if "etas" in rs:
            etas = tuple(float(e) for e in rs["etas"])
        else:
            etas = ETA_GRID_COARSE if l >= 3 else ETA_GRID_DEFAULT
        if not etas or any(e <= 0 for e in etas):
            raise ConfigError("regime eta grid must be non-empty and positive")
        predicted = None
        if hasattr(noise, "alpha"):
            predicted = float(scaling_exponent(profile, noise.alpha)[field - 1])
        regimes.append((b, etas, l, predicted))

    tasks = []
    for bi, (b, etas, _, _) in enumerate(regimes):
        for ei, eta in enumerate(etas):
            for rep in range(reps):
                tasks.append((land, points, noise, x0, field, eta, b,
                              max_steps, cfg.seed, (bi, ei, rep)))
    results = _parallel_map(_exit_worker, tasks, resolve_threads(threads))

    rows = []
    by_point = {}
    for task, (exit_step, censored, dest, exit_x) in zip(tasks, results):
        bi, ei, rep = task[9]
        eta, b = task[5], task[6]
        rows.append((eta, b, rep, exit_step, int(censored), field,
                     "" if dest is None else dest,
                     "" if exit_x is None else exit_x))
        by_point.setdefault((bi, ei), []).append((exit_step, censored))
    if not any(not c for pts in by_point.values() for _, c in pts):
        raise AllCensored("no replication exited before the step cap at any eta")

    fits = []
    for bi, (b, etas, l, predicted) in enumerate(regimes):
        means, cens = [], []
        for ei, eta in enumerate(etas):
            pts = by_point[(bi, ei)]
            means.append(float(np.mean([s for s, _ in pts])))
            cens.append(sum(1 for _, c in pts if c))
        eligible = [(eta, m) for eta, m, c in zip(etas, means, cens) if c / reps < 0.5]
        pw = fit_powerlaw(eligible)
        fits.append(ScalingFit(
            b=b, l_star=l, predicted=predicted, etas=etas,
            mean_exit=tuple(means), censored=tuple(cens), replications=reps,
            used_etas=tuple(e for e, _ in eligible),
            slope=pw.slope, slope_se=pw.slope_se,
            intercept=pw.intercept, intercept_se=pw.intercept_se))

    result = ExitScalingResult(field=field, x0=x0, fits=tuple(fits), rows=tuple(rows))
    if out_dir is not None:
        d = _out(out_dir)
        _write_csv(d / "exit.csv",
                   ["eta", "b", "replication", "exit_step", "censored",
                    "source_field", "dest_field", "exit_position"],
                   rows, cfg.raw)
        _write_json(d / "exit_scaling.json", {
            "field": field, "x0": x0, "replications": reps, "max_steps": max_steps,
            "regimes": [{
                "b": _b_json(f.b), "l_star": f.l_star,
                "predicted_exponent": f.predicted,
                "etas": list(f.etas), "mean_exit": list(f.mean_exit),
                "censored": list(f.censored), "used_etas": list(f.used_etas),
                "slope": f.slope, "slope_se": f.slope_se,
                "intercept": f.intercept, "intercept_se": f.intercept_se,
            } for f in fits],
        }, cfg.raw)
    return result


# ---------------------------------------------------------------------------
# Occupancy studies (1-D and 2-D)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OccupancyResult:
    start_field: int
    m_large: tuple
    per_path: tuple
    pooled: tuple
    small_field_fraction: float
    start_field_fraction: float
    eta: float
    b: float
    n_steps: int
    n_paths: int
    record_stride: int


def _occupancy_worker(task):
    land, points, noise, scfg, x0, seed, idx = task
    rng = stream(seed, PURPOSE_OCCUPANCY, idx)
    hist = run_occupancy(land, points, noise, scfg, x0, rng=rng)
    return hist.counts


def study_occupancy(cfg: ExperimentConfig, out_dir=None, threads=None) -> OccupancyResult:
    """Pooled visit histogram over several paths plus the sharp-field fraction."""
    land, points = _landscape_1d(cfg)
    noise = noise_from_spec(cfg.noise)
    p = cfg.params
    x0 = float(p["x0"])
    eta = float(p["eta"])
    b = _b_eff(p["b"])
    n_steps = int(p.get("n_steps", 10_000_000))
    n_paths = int(p.get("n_paths", 10))
    stride = int(p.get("record_stride", 10))
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    scfg = SgdConfig(eta=eta, b=b, max_steps=n_steps, record_stride=stride)
    start = field_of(points, x0)
    if start is SADDLE:
        raise ConfigError("x0 sits exactly on a saddle")
    graph = build_graph(jump_profile(points, b))
    m_large = tuple(sorted(graph.m_large))

    tasks = [(land, points, noise, scfg, x0, cfg.seed, i) for i in range(n_paths)]
    counts_list = _parallel_map(_occupancy_worker, tasks, resolve_threads(threads))
    pooled = np.sum(counts_list, axis=0)
    total = int(pooled.sum())
    if total == 0:
        raise ConfigError("run too short: no iterates were recorded")
    classified = int(pooled[1:].sum())
    small = sum(int(pooled[i]) for i in range(1, pooled.size) if i not in m_large)
    small_frac = small / classified if classified else 0.0
    start_frac = int(pooled[start]) / classified if classified else 0.0

    result = OccupancyResult(
        start_field=start, m_large=m_large,
        per_path=tuple(tuple(int(c) for c in cs) for cs in counts_list),
        pooled=tuple(int(c) for c in pooled),
        small_field_fraction=small_frac, start_field_fraction=start_frac,
        eta=eta, b=b, n_steps=n_steps, n_paths=n_paths, record_stride=stride)
    if out_dir is not None:
        d = _out(out_dir)
        _write_csv(d / "occupancy.csv", ["field_label", "count", "fraction"],
                   [(i, int(c), int(c) / total) for i, c in enumerate(pooled)],
                   cfg.raw)
        _write_json(d / "occupancy.json", {
            "x0": x0, "eta": eta, "b": _b_json(b), "n_steps": n_steps,
            "n_paths": n_paths, "record_stride": stride,
            "start_field": start, "m_large": list(m_large),
            "per_path": [list(c) for c in result.per_path],
            "pooled": list(result.pooled),
            "small_field_fraction": small_frac,
            "start_field_fraction": start_frac,
        }, cfg.raw)
    return result


@dataclass(frozen=True)
class R2Result:
    counts: tuple
    first_basin: int | None
    visited: tuple
    omega12_fraction: float
    transitions: tuple
    x0: tuple
    eta: float
    b: float
    n_steps: int
    record_stride: int
    visit_radius: float


def study_r2(cfg: ExperimentConfig, out_dir=None, threads=None) -> R2Result:
    """One long 2-D trajectory binned by attractor proximity."""
    land = landscape_from_spec(cfg.landscape or {"name": "himmelblau-r2"})
    if not isinstance(land, Landscape2D):
        raise ConfigError("r2-sim needs a 2-D landscape")
    noise = noise_from_spec(cfg.noise)
    probe = noise.sample(np.random.default_rng(0), 1)
    if np.shape(probe) != (1, 2):
        raise ConfigError("r2-sim needs a 2-D noise model")
    p = cfg.params
    x0 = [float(v) for v in p["x0"]]
    if len(x0) != 2:
        raise ConfigError("x0 must be a pair [x, y]")
    eta = float(p["eta"])
    b = _b_eff(p["b"])
    n_steps = int(p.get("n_steps", 3_000_000))
    stride = int(p.get("record_stride", 10))
    vr = float(p.get("visit_radius", 0.5))
    scfg = SgdConfig(eta=eta, b=b, max_steps=n_steps, record_stride=stride)
    rng = stream(cfg.seed, PURPOSE_OCCUPANCY, 0)
    hist = run_occupancy(land, None, noise, scfg, np.asarray(x0), rng=rng,
                         visit_radius=vr, keep_labels=True)
    if hist.total == 0:
        raise ConfigError("run too short: no iterates were recorded")
    labels = hist.labels
    inside = labels[labels > 0]
    first_basin = int(inside[0]) if inside.size else None
    transitions = []
    prev = None
    for j, lab in enumerate(labels):
        lab = int(lab)
        if lab != prev:
            transitions.append((int((j + 1) * stride), lab))
            prev = lab
    counts = hist.counts
    classified = int(counts[1:].sum())
    omega12 = (int(counts[1]) + int(counts[2])) / classified if classified else 0.0
    visited = tuple(i for i in range(1, 5) if counts[i] > 0)

    result = R2Result(counts=tuple(int(c) for c in counts), first_basin=first_basin,
                      visited=visited, omega12_fraction=omega12,
                      transitions=tuple(transitions), x0=tuple(x0), eta=eta, b=b,
                      n_steps=n_steps, record_stride=stride, visit_radius=vr)
    if out_dir is not None:
        d = _out(out_dir)
        total = hist.total
        _write_csv(d / "r2_occupancy.csv", ["field_label", "count", "fraction"],
                   [(i, int(c), int(c) / total) for i, c in enumerate(counts)],
                   cfg.raw)
        _write_json(d / "r2.json", {
            "x0": x0, "eta": eta, "b": _b_json(b), "n_steps": n_steps,
            "record_stride": stride, "visit_radius": vr,
            "counts": list(result.counts), "first_basin": first_basin,
            "visited": list(visited), "omega12_fraction": omega12,
            "transitions": [[s, l] for s, l in transitions],
        }, cfg.raw)
    return result


# ---------------------------------------------------------------------------
# Graph / rates / CTMC studies
# ---------------------------------------------------------------------------

def study_graph(cfg: ExperimentConfig, out_dir=None, threads=None):
    land, points = _landscape_1d(cfg)
    b = _b_eff(cfg.params["b"])
    graph = build_graph(jump_profile(points, b))
    alpha = None
    if cfg.noise is not None:
        alpha = getattr(noise_from_spec(cfg.noise), "alpha", None)
    if out_dir is not None:
        _write_json(_out(out_dir) / "graph.json", summary_dict(graph, alpha), cfg.raw)
    return graph


def _rates_table(cfg: ExperimentConfig, fields=None):
    land, points = _landscape_1d(cfg)
    noise = noise_from_spec(cfg.noise)
    p = cfg.params
    b = _b_eff(p["b"])
    profile = jump_profile(points, b)
    if fields is None and "fields" in p:
        fields = [int(i) for i in p["fields"]]
    table = estimate_table(
        land, profile, noise, fields=fields,
        n_samples=int(p.get("n_samples", 10 ** 6)),
        w_min=p.get("w_min"), T_max=p.get("T_max"),
        seed=cfg.seed, dt=float(p.get("dt", FLOW_DT)))
    return land, points, profile, table


def study_rates(cfg: ExperimentConfig, out_dir=None, threads=None):
    _, _, _, table = _rates_table(cfg)
    if out_dir is not None:
        _write_json(_out(out_dir) / "rates.json", table.to_json(), cfg.raw)
    return table


def study_ctmc(cfg: ExperimentConfig, class_index=None, out_dir=None, threads=None):
    """Rate estimation followed by reduction to the limiting chain of one class."""
    land, points, profile, table = _rates_table(cfg, fields=None)
    graph = build_graph(profile)
    ci = class_index if class_index is not None else cfg.params.get("class_index")
    if ci is None:
        raise ConfigError("ctmc reduction needs a class index (--class or params.class_index)")
    ci = int(ci)
    if not 0 <= ci < len(graph.classes):
        raise ConfigError(f"class index {ci} out of range 0..{len(graph.classes) - 1}")
    model = ctmc_generator(table, dtmc(table), graph, ci)
    if out_dir is not None:
        _write_json(_out(out_dir) / "ctmc.json", {
            "class_index": ci,
            "class_members": sorted(graph.classes[ci]),
            "absorbing": bool(graph.absorbing[ci]),
            "killed": bool(model.killed),
            "states": [int(s) for s in model.states],
            "members": [int(s) for s in model.members],
            "hold": [float(h) for h in model.hold],
            "kernel": [[float(v) for v in row] for row in model.kernel],
            "generator": [[float(v) for v in row] for row in model.generator()],
            "pi": {str(i): {str(j): float(pr) for j, pr in sorted(dist.items())}
                   for i, dist in sorted(model.pi.items())},
        }, cfg.raw)
    return model


# ---------------------------------------------------------------------------
# Theorem-style CTMC comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DestinationStat:
    field: int
    predicted: float
    observed: float
    count: int
    binom_se: float


@dataclass(frozen=True)
class CtmcCompareReport:
    field: int
    b: float
    eta: float
    l_star: int
    q: float
    q_se: float
    lam: float
    replications: int
    censored: int
    scaled_mean: float
    scaled_var: float
    ks: float
    destinations: tuple
    rate: object


def study_ctmc_compare(cfg: ExperimentConfig, out_dir=None, threads=None) -> CtmcCompareReport:
    """Scaled exit times against the unit exponential, destinations against rates."""
    land, points = _landscape_1d(cfg)
    noise = noise_from_spec(cfg.noise)
    p = cfg.params
    b = _b_eff(p["b"])
    eta = float(p["eta"])
    x0 = float(p["x0"])
    field = field_of(points, x0)
    if field is SADDLE:
        raise ConfigError("x0 sits exactly on a saddle")
    if "field" in p and int(p["field"]) != field:
        raise ConfigError(f"x0 = {x0} lies in field {field}, not {p['field']}")
    reps = int(p.get("replications", 240))
    if reps < 2:
        raise ConfigError("need at least 2 replications")
    max_steps = int(p.get("max_steps", 10 ** 8))
    rblock = p.get("rates", {})
    _check_keys(rblock, set(), {"n_samples", "w_min", "T_max", "dt"}, "rates block")

    profile = jump_profile(points, b)
    est = mc_estimate_rates(
        land, profile, noise, field,
        n_samples=int(rblock.get("n_samples", 10 ** 6)),
        w_min=rblock.get("w_min"), T_max=rblock.get("T_max"),
        seed=cfg.seed, dt=float(rblock.get("dt", FLOW_DT)))
    l = int(profile.l_star[field - 1])
    lam = noise.lambda_scale(eta, l)

    tasks = [(land, points, noise, x0, field, eta, b, max_steps, cfg.seed, (rep,))
             for rep in range(reps)]
    results = _parallel_map(_exit_worker, tasks, resolve_threads(threads))

    rows = []
    scaled = []
    dest_counts = {}
    censored_ct = 0
    for rep, (exit_step, censored, dest, _) in enumerate(results):
        s = est.q * lam * exit_step if not censored else None
        rows.append((rep, exit_step, int(censored),
                     "" if dest is None else dest, "" if s is None else s))
        if censored:
            censored_ct += 1
        else:
            scaled.append(s)
            dest_counts[dest] = dest_counts.get(dest, 0) + 1
    if not scaled:
        raise AllCensored("no replication exited before the step cap")
    scaled = np.asarray(scaled)
    n_u = scaled.size
    mean = float(scaled.mean())
    var = float(scaled.var(ddof=1))
    ks = ks_exponential(scaled)

    dests = []
    for j in sorted(set(est.targets) | set(dest_counts)):
        pred = est.target_q(j) / est.q if est.q > 0 else 0.0
        cnt = dest_counts.get(j, 0)
        se = math.sqrt(pred * (1.0 - pred) / n_u)
        dests.append(DestinationStat(field=j, predicted=float(pred),
                                     observed=cnt / n_u, count=cnt, binom_se=se))

    report = CtmcCompareReport(
        field=field, b=b, eta=eta, l_star=l, q=est.q, q_se=est.q_se, lam=lam,
        replications=reps, censored=censored_ct, scaled_mean=mean,
        scaled_var=var, ks=ks, destinations=tuple(dests), rate=est)
    if out_dir is not None:
        d = _out(out_dir)
        _write_csv(d / "ctmc_compare.csv",
                   ["replication", "exit_step", "censored", "dest_field", "scaled_time"],
                   rows, cfg.raw)
        _write_json(d / "ctmc_compare.json", {
            "field": field, "b": _b_json(b), "eta": eta, "l_star": l,
            "q": est.q, "q_se": est.q_se, "lambda": lam,
            "replications": reps, "censored": censored_ct,
            "scaled_mean": mean, "scaled_var": var, "ks_distance": ks,
            "destinations": [{
                "field": ds.field, "predicted": ds.predicted,
                "observed": ds.observed, "count": ds.count, "binom_se": ds.binom_se,
            } for ds in dests],
            "rate_settings": {"w_min": est.w_min, "T_max": est.T_max,
                              "n_samples": est.n_samples},
        }, cfg.raw)
    return report


# ---------------------------------------------------------------------------
# Injection demo
# ---------------------------------------------------------------------------

_INJECT_PROBLEM_DEFAULT = {"name": "multiwell", "jitter": 1.0, "n": 100, "seed": 11}


@dataclass(frozen=True)
class InjectionDemoReport:
    n_seeds: int
    wide_injected: int
    wide_plain: int
    m_large: tuple
    sharpness_injected: float
    sharpness_plain: float
    rows: tuple


def _inject_worker(task):
    problem, icfg, theta0, seed, i, delta, n_draws = task
    inj = run_two_phase(problem, icfg, theta0, stream(seed, PURPOSE_INJECT_SB, i))
    plain = run_plain_sb(problem, icfg, theta0, stream(seed, PURPOSE_INJECT_LB, i))
    sh_inj = expected_sharpness(problem, inj.theta, delta=delta, n_draws=n_draws,
                                rng=stream(seed, PURPOSE_SHARPNESS, i, 0))
    sh_plain = expected_sharpness(problem, plain.theta, delta=delta, n_draws=n_draws,
                                  rng=stream(seed, PURPOSE_SHARPNESS, i, 1))
    return (tuple(float(v) for v in inj.theta), float(problem.loss(inj.theta)),
            tuple(float(v) for v in plain.theta), float(problem.loss(plain.theta)),
            float(sh_inj), float(sh_plain))


def run_injection_demo(cfg: ExperimentConfig, out_dir=None, threads=None) -> InjectionDemoReport:
    """Two-phase heavy-tail injection vs plain small-batch SGD over many seeds."""
    p = cfg.params
    prob_spec = dict(p.get("problem", _INJECT_PROBLEM_DEFAULT))
    name = prob_spec.pop("name", None)
    if name is None:
        raise ConfigError("problem block needs a 'name'")
    try:
        problem = make_problem(name, **prob_spec)
    except TypeError as e:
        raise ConfigError(f"bad problem arguments: {e}") from e
    icfg = InjectionConfig(
        eta=float(p.get("eta", 0.004)), b=float(p.get("b", 0.25)),
        c=float(p.get("c", 0.5)), alpha=float(p.get("alpha", 1.4)),
        sb=int(p.get("sb", 10)), lb=int(p.get("lb", 100)),
        sb_star=int(p.get("sb_star", 5)), mode=p.get("mode", "independent"),
        phase1=int(p.get("phase1", 2000)), phase2=int(p.get("phase2", 500)))
    if "theta0" in p:
        theta0 = np.asarray(p["theta0"], dtype=float)
    elif name == "multiwell":
        theta0 = np.array([0.49])
    else:
        theta0 = np.zeros(problem.d)
    if theta0.shape != (problem.d,):
        raise ConfigError(f"theta0 must have {problem.d} components")
    n_seeds = int(p.get("n_seeds", 50))
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    delta = float(p.get("delta", 0.01))
    n_draws = int(p.get("n_draws", 200))

    tasks = [(problem, icfg, theta0, cfg.seed, i, delta, n_draws)
             for i in range(n_seeds)]
    results = _parallel_map(_inject_worker, tasks, resolve_threads(threads))

    classify = None
    m_large = ()
    if problem.d == 1:
        land = builtin_multiwell1d()
        points = find_critical_points(land)
        graph = build_graph(jump_profile(points, icfg.b))
        m_large = tuple(sorted(graph.m_large))

        def classify(theta):
            x = float(theta[0])
            if abs(x) > land.L:
                return None, False
            fld = field_of(points, x)
            if fld is SADDLE:
                return 0, False
            return fld, fld in m_large

    rows = []
    wide_inj = wide_plain = 0
    sh_inj_all, sh_plain_all = [], []
    for i, (th_i, loss_i, th_p, loss_p, sh_i, sh_p) in enumerate(results):
        for arm, th, loss, sh in (("injected", th_i, loss_i, sh_i),
                                  ("plain", th_p, loss_p, sh_p)):
            fld, wide = classify(th) if classify else (None, False)
            if wide:
                if arm == "injected":
                    wide_inj += 1
                else:
                    wide_plain += 1
            rows.append((i, arm, th[0] if len(th) == 1 else float(np.linalg.norm(th)),
                         loss, "" if fld is None else fld, int(wide), sh))
        sh_inj_all.append(sh_i)
        sh_plain_all.append(sh_p)

    report = InjectionDemoReport(
        n_seeds=n_seeds, wide_injected=wide_inj, wide_plain=wide_plain,
        m_large=m_large, sharpness_injected=float(np.mean(sh_inj_all)),
        sharpness_plain=float(np.mean(sh_plain_all)), rows=tuple(rows))
    if out_dir is not None:
        d = _out(out_dir)
        _write_csv(d / "inject.csv",
                   ["seed_index", "arm", "theta", "loss", "field", "wide", "sharpness"],
                   rows, cfg.raw)
        _write_json(d / "inject.json", {
            "problem": dict(p.get("problem", _INJECT_PROBLEM_DEFAULT)),
            "n_seeds": n_seeds, "m_large": list(m_large),
            "wide_injected": wide_inj, "wide_plain": wide_plain,
            "sharpness_injected": report.sharpness_injected,
            "sharpness_plain": report.sharpness_plain,
            "config": {"eta": icfg.eta, "b": icfg.b, "c": icfg.c,
                       "alpha": icfg.alpha, "sb": icfg.sb, "sb_star": icfg.sb_star,
                       "lb": icfg.lb, "mode": icfg.mode,
                       "phase1": icfg.phase1, "phase2": icfg.phase2},
        }, cfg.raw)
    return report


# ---------------------------------------------------------------------------
# Landscape inspection and dispatch
# ---------------------------------------------------------------------------

def inspect_landscape(cfg: ExperimentConfig | None = None, out_dir=None):
    """Critical-point report for the configured (or builtin) landscape."""
    spec = (cfg.landscape if cfg is not None else None) or {"name": "multiwell-r1"}
    raw = cfg.raw if cfg is not None else {"landscape": spec}
    land = landscape_from_spec(spec)
    if isinstance(land, Landscape2D):
        payload = {
            "name": land.name, "projection_radius": land.R,
            "attractors": [{"label": i + 1, "kind": kind, "geometry": list(geom)}
                           for i, (kind, geom) in enumerate(land.attractors)],
        }
        result = land
    else:
        points = find_critical_points(land)
        payload = {
            "name": land.name, "L": land.L,
            "minima": [float(m) for m in points.minima],
            "saddles": [float(s) for s in points.saddles],
            "widths": [float(points.r(i)) for i in range(1, points.n_min + 1)],
            "f_minima": [float(land.f(m)) for m in points.minima],
        }
        result = points
    if out_dir is not None:
        _write_json(_out(out_dir) / "landscape.json", payload, raw)
    return result


_RUNNERS = {
    "exit-scaling": study_exit_scaling,
    "occupancy": study_occupancy,
    "graph": study_graph,
    "rates": study_rates,
    "ctmc-compare": study_ctmc_compare,
    "inject-demo": run_injection_demo,
    "r2-sim": study_r2,
}


def run_study(cfg: ExperimentConfig, out_dir=None, threads=None):
    """Dispatch a config to its study runner."""
    return _RUNNERS[cfg.study](cfg, out_dir=out_dir, threads=threads)
