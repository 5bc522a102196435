"""Clipped, projected SGD and its trajectory statistics.

The recursion is X_{n+1} = phi_L(X_n - phi_b(eta * (f'(X_n) - Z_n))) in 1-D,
with radial clipping and ball projection in 2-D.  Hot loops run in compiled
kernels over fixed-size noise chunks so that trajectories are bit-for-bit
reproducible regardless of chunk scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import CHUNK
from .errors import ConfigError, NonFiniteGradient
from .landscape import SADDLE, CriticalPointSet, Landscape1D, Landscape2D, field_of


@dataclass(frozen=True)
class SgdConfig:
    """Step size, clipping threshold and projection radius for one run.

    ``b = math.inf`` encodes the unclipped recursion.
    """

    eta: float
    b: float
    max_steps: int
    seed: int = 0
    record_stride: int = 10

    def __post_init__(self):
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.b <= 0:
            raise ConfigError("b must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be at least 1")


@dataclass(frozen=True)
class ExitRecord:
    """First exit of a trajectory from its starting attraction field."""

    exit_step: int
    censored: bool
    source_field: int
    dest_field: int | None
    exit_position: float | None


class OccupancyHistogram:
    """Visit counts of recorded iterates, binned by attraction field.

    Bucket 0 collects iterates belonging to no field: exact saddle hits in
    1-D (measure zero) and points beyond the visit radius of every
    attractor in 2-D.  Buckets 1..n are the fields.
    """

    def __init__(self, counts, labels=None):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.labels = labels

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def out_count(self) -> int:
        return int(self.counts[0])

    def fraction(self, i: int) -> float:
        if self.total == 0:
            return 0.0
        return float(self.counts[i]) / self.total

    def merge(self, other: "OccupancyHistogram") -> "OccupancyHistogram":
        if other.counts.shape != self.counts.shape:
            raise ConfigError("cannot merge histograms with different field counts")
        return OccupancyHistogram(self.counts + other.counts)

    def __repr__(self):
        return f"OccupancyHistogram(counts={self.counts.tolist()})"


def truncate(w, c):
    """phi_c: clamp a scalar to [-c, c], or rescale a vector to norm <= c."""
    if c <= 0:
        raise ConfigError("truncation threshold must be positive")
    if np.ndim(w) == 0:
        return min(max(float(w), -c), c)
    w = np.asarray(w, dtype=float)
    nrm = float(np.linalg.norm(w))
    if nrm <= c or nrm == 0.0:
        return w.copy()
    return w * (c / nrm)


def _require_kernel(land: Landscape1D):
    if land.kernel is None:
        raise ConfigError("landscape has no compiled kernel")
    return land.kernel


def step(land, noise, cfg: SgdConfig, x, rng: np.random.Generator):
    """One SGD update; consumes exactly one noise draw."""
    z = noise.sample(rng, 1)
    if isinstance(land, Landscape2D):
        g = land.grad(x[0], x[1])
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient not finite at {x}")
        u = truncate(cfg.eta * (g - z[0]), cfg.b)
        y = np.asarray(x, dtype=float) - u
        nrm = float(np.linalg.norm(y))
        if nrm > land.R:
            y *= land.R / nrm
        return y
    g = float(land.fprime(x))
    if not math.isfinite(g):
        raise NonFiniteGradient(f"f'({x}) is not finite")
    u = truncate(cfg.eta * (g - float(z[0])), cfg.b)
    return min(max(float(x) - u, -land.L), land.L)


def run_until_exit(land: Landscape1D, points: CriticalPointSet, noise,
                   cfg: SgdConfig, x0: float, k: int | None = None,
                   rng: np.random.Generator | None = None) -> ExitRecord:
    """Iterate until the trajectory leaves field k, or censor at max_steps.

    Exact saddle hits do not count as exits (field membership is an open
    interval); iteration simply continues.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    start_field = field_of(points, x0)
    if start_field is SADDLE:
        raise ConfigError(f"x0 = {x0} sits exactly on a saddle")
    if k is None:
        k = start_field
    elif k != start_field:
        raise ConfigError(f"x0 = {x0} lies in field {start_field}, not {k}")
    kind, params = _require_kernel(land)
    lo, hi = points.bounds(k)
    x = float(x0)
    steps = 0
    remaining = cfg.max_steps
    while remaining > 0:
        n = min(CHUNK, remaining)
        z = noise.sample(rng, n)
        x, taken, status, exit_x = _kernels.run_exit_chunk(
            kind, params, x, lo, hi, cfg.eta, cfg.b, land.L, z, n)
        steps += int(taken)
        remaining -= int(taken)
        if status == -1:
            raise NonFiniteGradient(f"f' became non-finite near x = {x}")
        if status == 1:
            dest = field_of(points, exit_x)
            if dest is SADDLE:
                # landing exactly on a saddle of another field boundary:
                # label by the field to its right
                dest = int(np.searchsorted(points.saddles, exit_x, side="right")) + 1
            return ExitRecord(exit_step=steps, censored=False, source_field=k,
                              dest_field=int(dest), exit_position=float(exit_x))
    return ExitRecord(exit_step=cfg.max_steps, censored=True, source_field=k,
                      dest_field=None, exit_position=None)


def run_occupancy(land, points, noise, cfg: SgdConfig, x0,
                  rng: np.random.Generator | None = None,
                  visit_radius: float = 0.5,
                  keep_labels: bool = False) -> OccupancyHistogram:
    """Run max_steps updates, binning every record_stride-th iterate.

    1-D landscapes bin by attraction field; the 2-D landscape bins by
    proximity (distance to an attractor set below ``visit_radius``), with
    bucket 0 for unclassified positions.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    stride = cfg.record_stride
    n_rec_total = cfg.max_steps // stride
    labels = np.zeros(n_rec_total, dtype=np.int8) if keep_labels else None

    if isinstance(land, Landscape2D):
        counts = np.zeros(5, dtype=np.int64)
        att = land.att_array()
        params = land.params_array()
        x, y = float(x0[0]), float(x0[1])
        chunk_labels = np.zeros(CHUNK // stride + 2, dtype=np.int8)
        countdown = stride
        remaining = cfg.max_steps
        rec_at = 0
        while remaining > 0:
            n = min(CHUNK, remaining)
            zxy = noise.sample(rng, n)
            x, y, countdown, taken, filled, status = _kernels.run_r2_chunk(
                params, x, y, cfg.eta, cfg.b, land.R,
                np.ascontiguousarray(zxy[:, 0]), np.ascontiguousarray(zxy[:, 1]),
                att, visit_radius, chunk_labels, stride, countdown, 0, n)
            if status == -1:
                raise NonFiniteGradient("gradient became non-finite in 2-D run")
            filled = int(filled)
            if filled:
                counts += np.bincount(chunk_labels[:filled], minlength=5)
                if keep_labels:
                    labels[rec_at:rec_at + filled] = chunk_labels[:filled]
            rec_at += filled
            remaining -= int(taken)
        return OccupancyHistogram(counts, labels=labels)

    kind, params = _require_kernel(land)
    counts = np.zeros(points.n_min + 1, dtype=np.int64)
    x = float(x0)
    countdown = stride
    remaining = cfg.max_steps
    while remaining > 0:
        n = min(CHUNK, remaining)
        z = noise.sample(rng, n)
        x, countdown, taken, status = _kernels.run_occupancy_chunk(
            kind, params, x, cfg.eta, cfg.b, land.L, z, points.saddles,
            counts, stride, countdown, n)
        if status == -1:
            raise NonFiniteGradient(f"f' became non-finite near x = {x}")
        remaining -= int(taken)
    return OccupancyHistogram(counts)


def run_trace(land: Landscape1D, noise, cfg: SgdConfig, x0: float,
              stride: int = 100, rng: np.random.Generator | None = None) -> np.ndarray:
    """Positions of every stride-th iterate (trajectory dumps for plotting)."""
    if stride < 100:
        raise ConfigError("trace stride must be at least 100")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    kind, params = _require_kernel(land)
    n_rec = cfg.max_steps // stride
    out = np.zeros(n_rec)
    x = float(x0)
    countdown = stride
    remaining = cfg.max_steps
    rec_at = 0
    buf = np.zeros(CHUNK // stride + 2)
    while remaining > 0:
        n = min(CHUNK, remaining)
        z = noise.sample(rng, n)
        x, countdown, taken, filled, status = _kernels.trace_chunk(
            kind, params, x, cfg.eta, cfg.b, land.L, z, stride, countdown, buf, 0, n)
        if status == -1:
            raise NonFiniteGradient(f"f' became non-finite near x = {x}")
        out[rec_at:rec_at + int(filled)] = buf[:int(filled)]
        rec_at += int(filled)
        remaining -= int(taken)
    return out
