"""Objective landscapes.

1-D: closed-form multi-well functions with enumerated critical points and
attraction fields.  2-D: a transformed Himmelblau surface whose lower-left
region is cut into a valley of minimizers forming a line segment.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import _kernels
from .errors import (ConfigError, DegenerateCritical, InterleavingViolation,
                     NoConvergence, NonFiniteGradient)


class SaddleSentinel:
    """Marker returned by :func:`field_of` when x sits exactly on a saddle."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):  # pragma: no cover
        return "SADDLE"


#: singleton sentinel for exact saddle hits
SADDLE = SaddleSentinel()


# ---------------------------------------------------------------------------
# 1-D landscapes
# ---------------------------------------------------------------------------

def _polyval(coeffs, x):
    return npoly.polyval(x, coeffs)


class Landscape1D:
    """A C^2 objective on [-L, L] with closed-form value and derivative.

    ``kernel`` ties the landscape to a compiled evaluator: a pair
    ``(kind, fprime_params)`` understood by :mod:`mlab._kernels`.  Landscapes
    without a kernel still work through the pure-Python code paths, just
    slower.  Instances are immutable by convention and safe to share across
    workers.
    """

    def __init__(self, f, fprime, L, fsecond=None, name=None,
                 kernel=None, kernel_f_params=None, spec=None):
        self.f = f
        self.fprime = fprime
        self.fsecond = fsecond
        self.L = float(L)
        self.name = name
        self.kernel = kernel
        self.kernel_f_params = kernel_f_params
        self.spec = spec

    def __repr__(self):
        return f"Landscape1D(name={self.name!r}, L={self.L})"


def _multiwell_f_np(x):
    x = np.asarray(x, dtype=float)
    t1 = x + 1.3
    t2 = x - 0.2
    t3 = x - 0.7
    p = (x + 1.6) * t1 * t1 * t2 * t2 * t3 * t3 * (x - 1.6)
    p = p * (0.05 * np.abs(1.65 - x)) ** 0.6
    p = p * (1.0 + 1.0 / (0.01 + 4.0 * (x - 0.5) ** 2))
    p = p * (1.0 + 1.0 / (0.1 + 4.0 * (x + 1.5) ** 2))
    p = p * (1.0 - 0.25 * np.exp(-5.0 * (x + 0.8) ** 2))
    return float(p) if p.ndim == 0 else p


def _multiwell_fprime_np(x):
    x = np.asarray(x, dtype=float)
    p0 = x + 1.6
    d0 = np.ones_like(x)
    t1 = x + 1.3
    p1 = t1 * t1
    d1 = 2.0 * t1
    t2 = x - 0.2
    p2 = t2 * t2
    d2 = 2.0 * t2
    t3 = x - 0.7
    p3 = t3 * t3
    d3 = 2.0 * t3
    p4 = x - 1.6
    d4 = np.ones_like(x)
    a = np.abs(1.65 - x)
    p5 = (0.05 * a) ** 0.6
    with np.errstate(divide="ignore"):
        d5 = -np.sign(1.65 - x) * 0.03 * (0.05 * a) ** (-0.4)
    u1 = x - 0.5
    den1 = 0.01 + 4.0 * u1 * u1
    p6 = 1.0 + 1.0 / den1
    d6 = -8.0 * u1 / (den1 * den1)
    u2 = x + 1.5
    den2 = 0.1 + 4.0 * u2 * u2
    p7 = 1.0 + 1.0 / den2
    d7 = -8.0 * u2 / (den2 * den2)
    u3 = x + 0.8
    e3 = np.exp(-5.0 * u3 * u3)
    p8 = 1.0 - 0.25 * e3
    d8 = 2.5 * u3 * e3

    ps = (p0, p1, p2, p3, p4, p5, p6, p7, p8)
    ds = (d0, d1, d2, d3, d4, d5, d6, d7, d8)
    pref = np.ones_like(x)
    total = np.zeros_like(x)
    # suffix products, innermost first
    suff = [np.ones_like(x)]
    for p in ps[:0:-1]:
        suff.append(suff[-1] * p)
    suff.reverse()
    for k in range(9):
        total = total + ds[k] * pref * suff[k]
        pref = pref * ps[k]
    return float(total) if total.ndim == 0 else total


def builtin_multiwell1d() -> Landscape1D:
    """The analytic four-well test function on [-1.6, 1.6]."""
    return Landscape1D(
        f=_multiwell_f_np,
        fprime=_multiwell_fprime_np,
        L=1.6,
        name="multiwell-r1",
        kernel=(_kernels.KIND_BUILTIN_1D, np.zeros(0)),
        kernel_f_params=np.zeros(0),
        spec={"name": "multiwell-r1"},
    )


def from_polynomial(coeffs, L, name=None, spec=None) -> Landscape1D:
    """Landscape with f given by ascending polynomial coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 2:
        raise ConfigError("polynomial landscape needs at least two coefficients")
    if not np.all(np.isfinite(coeffs)):
        raise ConfigError("polynomial coefficients must be finite")
    dcoeffs = npoly.polyder(coeffs)
    d2coeffs = npoly.polyder(dcoeffs)
    return Landscape1D(
        f=functools.partial(_polyval, coeffs),
        fprime=functools.partial(_polyval, dcoeffs),
        fsecond=functools.partial(_polyval, d2coeffs),
        L=L,
        name=name or "polynomial",
        kernel=(_kernels.KIND_POLY, dcoeffs),
        kernel_f_params=coeffs,
        spec=spec if spec is not None else {"kind": "polynomial", "coeffs": [float(c) for c in coeffs], "L": float(L)},
    )


def from_critical_points(points, L, amplitude=1.0, name=None) -> Landscape1D:
    """Landscape defined by the roots of f': f'(x) = amplitude * prod(x - c_k).

    With an odd number of strictly increasing roots and positive amplitude,
    minima and saddles alternate starting and ending with a minimum.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 1 or points.size < 1 or points.size % 2 == 0:
        raise ConfigError("critical-points landscape needs an odd number of points")
    if not np.all(np.diff(points) > 0):
        raise ConfigError("critical points must be strictly increasing")
    if amplitude <= 0:
        raise ConfigError("amplitude must be positive")
    dcoeffs = amplitude * npoly.polyfromroots(points)
    coeffs = npoly.polyint(dcoeffs)
    land = from_polynomial(coeffs, L, name=name or "critical-points",
                           spec={"kind": "critical-points",
                                 "points": [float(p) for p in points],
                                 "L": float(L), "amplitude": float(amplitude)})
    return land


_LANDSCAPE_SPEC_KEYS = {
    "named": {"name"},
    "polynomial": {"kind", "coeffs", "L"},
    "critical-points": {"kind", "points", "L", "amplitude"},
}


def from_spec(d):
    """Build a landscape from its JSON description.

    ``{"name": "multiwell-r1" | "himmelblau-r2"}`` selects a builtin;
    ``{"kind": "polynomial", "coeffs": [...], "L": ...}`` and
    ``{"kind": "critical-points", "points": [...], "L": ..., "amplitude": ...}``
    define custom 1-D landscapes.  Unknown keys are rejected.
    """
    if not isinstance(d, dict):
        raise ConfigError("landscape spec must be an object")
    if "name" in d:
        extra = set(d) - _LANDSCAPE_SPEC_KEYS["named"]
        if extra:
            raise ConfigError(f"unknown landscape keys: {sorted(extra)}")
        if d["name"] == "multiwell-r1":
            return builtin_multiwell1d()
        if d["name"] == "himmelblau-r2":
            return builtin_himmelblau2d()
        raise ConfigError(f"unknown landscape name: {d['name']!r}")
    kind = d.get("kind")
    if kind == "polynomial":
        extra = set(d) - _LANDSCAPE_SPEC_KEYS["polynomial"]
        if extra:
            raise ConfigError(f"unknown landscape keys: {sorted(extra)}")
        if "coeffs" not in d or "L" not in d:
            raise ConfigError("polynomial landscape needs 'coeffs' and 'L'")
        return from_polynomial(d["coeffs"], d["L"], spec=dict(d))
    if kind == "critical-points":
        extra = set(d) - _LANDSCAPE_SPEC_KEYS["critical-points"]
        if extra:
            raise ConfigError(f"unknown landscape keys: {sorted(extra)}")
        if "points" not in d or "L" not in d:
            raise ConfigError("critical-points landscape needs 'points' and 'L'")
        return from_critical_points(d["points"], d["L"], amplitude=d.get("amplitude", 1.0))
    raise ConfigError("landscape spec needs 'name' or a known 'kind'")


# ---------------------------------------------------------------------------
# Critical points and attraction fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttractionField:
    """Open interval (lo, hi) flowing to the minimum at ``m``; 1-based index."""

    index: int
    lo: float
    hi: float
    m: float
    r: float


@dataclass(frozen=True)
class CriticalPointSet:
    """Interleaved minima and saddles: m_1 < s_1 < m_2 < ... < m_n."""

    minima: np.ndarray
    saddles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minima", np.asarray(self.minima, dtype=float))
        object.__setattr__(self, "saddles", np.asarray(self.saddles, dtype=float))
        m, s = self.minima, self.saddles
        if m.size < 1 or s.size != m.size - 1:
            raise InterleavingViolation(
                f"need n minima and n-1 saddles, got {m.size} and {s.size}")
        merged = np.empty(m.size + s.size)
        merged[0::2] = m
        merged[1::2] = s
        if not np.all(np.diff(merged) > 0):
            raise InterleavingViolation("minima and saddles do not strictly alternate")

    @property
    def n_min(self) -> int:
        return int(self.minima.size)

    def bounds(self, i: int) -> tuple[float, float]:
        """Open-interval bounds of field i (1-based), with +-inf at the ends."""
        if not 1 <= i <= self.n_min:
            raise ConfigError(f"field index {i} out of range 1..{self.n_min}")
        lo = self.saddles[i - 2] if i >= 2 else -math.inf
        hi = self.saddles[i - 1] if i <= self.n_min - 1 else math.inf
        return lo, hi

    def r(self, i: int) -> float:
        """Width of field i: distance from m_i to its nearest saddle.

        Boundary fields use their single finite saddle distance.
        """
        lo, hi = self.bounds(i)
        m = self.minima[i - 1]
        return min(m - lo, hi - m)

    def fields(self) -> list[AttractionField]:
        out = []
        for i in range(1, self.n_min + 1):
            lo, hi = self.bounds(i)
            out.append(AttractionField(i, lo, hi, float(self.minima[i - 1]), self.r(i)))
        return out


def find_critical_points(land: Landscape1D, grid_n: int = 20000, tol: float = 1e-10,
                         curvature_tol: float = 1e-6, grad_tol: float = 1e-6) -> CriticalPointSet:
    """Locate and classify the critical points of a 1-D landscape.

    Scans a uniform grid over (-L, L) for sign changes of f', bisects each
    bracket to width < tol, and classifies by the sign of f'' (analytic if
    available, else a central difference of f').
    """
    if grid_n < 100:
        raise ConfigError("grid_n must be at least 100")
    if tol <= 0:
        raise ConfigError("tol must be positive")
    L = land.L
    eps = 1e-9 * max(L, 1.0)
    xs = np.linspace(-L + eps, L - eps, grid_n)
    fp = np.asarray(land.fprime(xs), dtype=float)
    if not np.all(np.isfinite(fp)):
        raise NonFiniteGradient("f' is not finite on the scan grid")

    roots: list[float] = []
    for i in range(grid_n - 1):
        if fp[i] == 0.0:
            roots.append(float(xs[i]))
            continue
        if fp[i] * fp[i + 1] < 0.0:
            a, b = float(xs[i]), float(xs[i + 1])
            fa = fp[i]
            while b - a > tol:
                mid = 0.5 * (a + b)
                fm = float(land.fprime(mid))
                if fm == 0.0:
                    a = b = mid
                    break
                if (fa < 0) == (fm < 0):
                    a, fa = mid, fm
                else:
                    b = mid
            roots.append(0.5 * (a + b))
    if fp[-1] == 0.0:
        roots.append(float(xs[-1]))

    if not roots:
        raise InterleavingViolation("no critical points found in (-L, L)")

    h = 1e-6 * max(L, 1.0)
    tags = []
    for r_ in roots:
        g = float(land.fprime(r_))
        if abs(g) >= grad_tol:
            raise DegenerateCritical(f"|f'({r_:.6g})| = {abs(g):.3g} exceeds grad_tol")
        if land.fsecond is not None:
            f2 = float(land.fsecond(r_))
        else:
            f2 = (float(land.fprime(r_ + h)) - float(land.fprime(r_ - h))) / (2 * h)
        if abs(f2) < curvature_tol:
            raise DegenerateCritical(f"|f''({r_:.6g})| = {abs(f2):.3g} below curvature_tol")
        tags.append("min" if f2 > 0 else "saddle")

    expected = ["min" if k % 2 == 0 else "saddle" for k in range(len(roots))]
    if tags != expected or len(roots) % 2 == 0:
        raise InterleavingViolation(f"critical point tags do not alternate min/saddle: {tags}")

    return CriticalPointSet(minima=np.array(roots[0::2]), saddles=np.array(roots[1::2]))


def field_of(points: CriticalPointSet, x: float):
    """Index i of the attraction field containing x, or SADDLE on exact hits.

    Fields are the open intervals (s_{i-1}, s_i) with s_0 = -inf and
    s_n = +inf, so the index is monotone nondecreasing in x.
    """
    s = points.saddles
    if np.any(s == x):
        return SADDLE
    return int(np.searchsorted(s, x, side="right")) + 1


# ---------------------------------------------------------------------------
# 2-D landscape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Landscape2D:
    """Transformed Himmelblau surface with a cut valley of minimizers.

    The base surface is h(u, v) = (u^2+v-11)^2 + (u+v^2-7)^2 composed with
    the coordinate stretch u = (x-ax)*s, v = y*s where
    s = exp(c0*((x-ax)-ax)) + 1.  Inside the strip x in [bl, br],
    |y-ay| < by, the surface is cut down to c1*|y-ay|^1.1 wherever that is
    lower, which turns part of the valley floor {y = ay} into a segment of
    minimizers.  The objective is ``scale`` times the result; iterates are
    projected onto the ball of radius R.

    ``attractors`` lists one entry per basin, in display order:
    ``("point", (x, y))`` or ``("segment", (x0, x1, y))``.
    """

    ax: float = 1.5
    ay: float = -2.9
    bl: float = -5.5
    br: float = -0.5
    by: float = 2.0
    c0: float = 0.4
    c1: float = 12.0
    scale: float = 0.1
    R: float = 4.2
    attractors: tuple = ()
    name: str = "himmelblau-r2"

    def params_array(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.bl, self.br, self.by,
                         self.c0, self.c1, self.scale])

    def value(self, x: float, y: float) -> float:
        return float(_kernels.f_2d(self.params_array(), float(x), float(y)))

    def grad(self, x: float, y: float) -> np.ndarray:
        gx, gy = _kernels.grad_2d(self.params_array(), float(x), float(y))
        return np.array([gx, gy])

    def attractor_distance(self, label: int, x: float, y: float) -> float:
        """Distance from (x, y) to the attractor set of basin ``label`` (1-based)."""
        kind, geo = self.attractors[label - 1]
        if kind == "point":
            return math.hypot(x - geo[0], y - geo[1])
        x0, x1, ys = geo
        cx = min(max(x, x0), x1)
        return math.hypot(x - cx, y - ys)

    def att_array(self) -> np.ndarray:
        """Attractor geometry packed for the occupancy kernel."""
        (k1, p1), (k2, seg), (k3, p3), (k4, p4) = self.attractors
        if (k1, k2, k3, k4) != ("point", "segment", "point", "point"):
            raise ConfigError("occupancy kernel expects basins (point, segment, point, point)")
        return np.array([p1[0], p1[1], seg[0], seg[1], seg[2], p3[0], p3[1], p4[0], p4[1]])


def builtin_himmelblau2d() -> Landscape2D:
    """The 2-D test surface with its four basins, in display order.

    Basin 1 and the segment-shaped basin 2 are the wide ones; basins 3 and 4
    are narrow.  Attractor coordinates were located by gradient flow plus
    root polishing on the closed-form gradient; the segment is the part of
    the valley floor {y = ay, bl <= x <= br} inside the projection ball.
    """
    R, ay, br = 4.2, -2.9, -0.5
    seg_x0 = -math.sqrt(R * R - ay * ay)
    return Landscape2D(attractors=(
        ("point", (-0.8020451616067533, 2.569739530025697)),
        ("segment", (seg_x0, br, ay)),
        ("point", (3.0, 1.0)),
        ("point", (3.215144669176048, -0.8843263275540836)),
    ))


def classify_basin_2d(land: Landscape2D, x0, flow_step: float = 0.01,
                      max_iter: int = 200000, registry: list | None = None,
                      cluster_radius: float = 0.25, grad_tol: float = 1e-5) -> int:
    """Label the basin reached by deterministic gradient descent from x0.

    Convergence is declared when the gradient norm drops below ``grad_tol``
    or when the iterate stops moving (windowed displacement test; the cut
    valley's kink keeps its gradient norm bounded away from zero).

    With ``registry`` (a mutable list of cluster centers) labels are
    assigned lazily by proximity: the first endpoint opens cluster 1, and so
    on.  Without a registry the landscape's own attractor sets define the
    labels.
    """
    x0 = np.asarray(x0, dtype=float)
    if math.hypot(*x0) > land.R + 1e-12:
        raise ConfigError(f"start {x0} outside the projection ball of radius {land.R}")
    x, y, status = _kernels.flow_2d(land.params_array(), float(x0[0]), float(x0[1]),
                                    flow_step, grad_tol, max_iter, 200, 0.03)
    if status == -2:
        raise NonFiniteGradient("gradient flow produced a non-finite state")
    if status == -1:
        raise NoConvergence(f"gradient flow from {x0} did not settle in {max_iter} iterations")
    if registry is not None:
        for k, (cx, cy) in enumerate(registry):
            if math.hypot(x - cx, y - cy) < cluster_radius:
                return k + 1
        registry.append((x, y))
        return len(registry)
    if not land.attractors:
        raise ConfigError("landscape has no registered attractors; pass a registry")
    dists = [land.attractor_distance(i + 1, x, y) for i in range(len(land.attractors))]
    best = int(np.argmin(dists))
    if dists[best] > cluster_radius:
        raise NoConvergence(
            f"flow endpoint ({x:.4f}, {y:.4f}) is {dists[best]:.3f} from the nearest attractor")
    return best + 1
