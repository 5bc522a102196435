"""Typical transition graphs.

Escaping an attraction field of width r under clipping threshold b takes at
least l* = ceil(r/b) noise jumps; reaching field j from m_i takes l_{i,j}
jumps computed from saddle distances.  Edges connect fields reachable in
exactly l* jumps, and the communication structure of that directed graph
(strongly connected components, absorbing/transient classes) determines
which minima survive in the small-learning-rate limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Assumption3Violation, ConfigError
from .landscape import CriticalPointSet

#: relative distance to the nearest integer below which ceil(r/b) is
#: considered ill-posed and rate estimation refuses to run
INTEGER_TOL = 1e-9


@dataclass(frozen=True)
class JumpProfile:
    """Jump counts for one landscape/threshold pair.

    ``l[i-1, j-1]`` is the minimum number of clipped jumps from m_i into
    field j (diagonal entries are 0 and unused); ``l_star[i-1]`` the
    minimum to escape field i at all.  ``violations`` lists fields whose
    r_i/b sits within INTEGER_TOL of an integer, where the ceiling (and so
    every derived rate constant) is ill-conditioned.
    """

    points: CriticalPointSet
    b: float
    r: np.ndarray
    l_star: np.ndarray
    l: np.ndarray
    violations: tuple

    @property
    def n(self) -> int:
        return self.points.n_min


def _ceil_jumps(dist: float, b: float) -> int:
    if math.isinf(b):
        return 1
    return max(1, math.ceil(dist / b))


def jump_profile(points: CriticalPointSet, b: float) -> JumpProfile:
    """Compute r_i, l*_i and the pairwise jump counts l_{i,j}."""
    if b <= 0:
        raise ConfigError("b must be positive")
    n = points.n_min
    if n < 2:
        raise ConfigError("jump profile needs at least two minima")
    m = points.minima
    s = points.saddles
    r = np.array([points.r(i) for i in range(1, n + 1)])

    l = np.zeros((n, n), dtype=np.int64)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if j > i:
                l[i - 1, j - 1] = _ceil_jumps(s[j - 2] - m[i - 1], b)
            elif j < i:
                l[i - 1, j - 1] = _ceil_jumps(m[i - 1] - s[j - 1], b)
    l_star = np.array([_ceil_jumps(r[i], b) for i in range(n)], dtype=np.int64)

    # the minimum jump count over destinations is attained at the nearest
    # saddle, so it must agree with ceil(r_i / b)
    for i in range(n):
        off = [l[i, j] for j in range(n) if j != i]
        assert l_star[i] == min(off), (i, l_star[i], off)

    violations = []
    if math.isfinite(b):
        for i in range(n):
            ratio = r[i] / b
            if abs(ratio - round(ratio)) <= INTEGER_TOL * max(1.0, ratio):
                violations.append(i + 1)
    return JumpProfile(points=points, b=float(b), r=r, l_star=l_star, l=l,
                       violations=tuple(violations))


@dataclass(frozen=True)
class TransitionGraph:
    """Edges i -> j iff l_{i,j} = l*_i, plus the derived class structure."""

    profile: JumpProfile
    edges: frozenset
    classes: tuple          # tuple of frozensets of 1-based node indices
    absorbing: tuple        # one flag per class
    irreducible: bool
    symmetric: bool
    m_large: frozenset
    l_large: int

    @property
    def n(self) -> int:
        return self.profile.n

    def out_neighbors(self, i: int) -> list:
        return sorted(j for (a, j) in self.edges if a == i)


def _tarjan_scc(n: int, adj: dict) -> list:
    """Strongly connected components, returned as lists of nodes."""
    index = {}
    low = {}
    on_stack = {}
    stack = []
    sccs = []
    counter = [0]

    def strongconnect(v):
        work = [(v, iter(adj[v]))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack[v] = True
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                elif on_stack.get(w):
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)

    for v in range(1, n + 1):
        if v not in index:
            strongconnect(v)
    return sccs


def build_graph(profile: JumpProfile) -> TransitionGraph:
    """Edge set, communication classes and the M_large parameters."""
    n = profile.n
    edges = set()
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if j != i and profile.l[i - 1, j - 1] == profile.l_star[i - 1]:
                edges.add((i, j))
    out_deg = {i: 0 for i in range(1, n + 1)}
    for (i, _) in edges:
        out_deg[i] += 1
    assert all(d >= 1 for d in out_deg.values()), "every field can be escaped"

    adj = {i: sorted(j for (a, j) in edges if a == i) for i in range(1, n + 1)}
    sccs = sorted((sorted(c) for c in _tarjan_scc(n, adj)), key=lambda c: c[0])
    classes = tuple(frozenset(c) for c in sccs)
    absorbing = tuple(
        all(j in cls for (i, j) in edges if i in cls) for cls in classes)
    assert any(absorbing), "a finite condensation has at least one sink"
    irreducible = len(classes) == 1

    # geometric symmetry test: every interior minimum can reach both
    # neighbors within its l* jumps
    m = profile.points.minima
    s = profile.points.saddles
    symmetric = True
    for i in range(2, n):
        reach = profile.l_star[i - 1] * profile.b
        if max(s[i - 1] - m[i - 1], m[i - 1] - s[i - 2]) >= reach:
            symmetric = False
            break

    l_large = int(profile.l_star.max())
    m_large = frozenset(i + 1 for i in range(n) if profile.l_star[i] == l_large)
    return TransitionGraph(profile=profile, edges=frozenset(edges),
                           classes=classes, absorbing=absorbing,
                           irreducible=irreducible, symmetric=symmetric,
                           m_large=m_large, l_large=l_large)


def scaling_exponent(profile: JumpProfile, alpha: float) -> np.ndarray:
    """Predicted exit-time exponents 1 + (alpha - 1) * l*_i."""
    if alpha <= 1:
        raise ConfigError("alpha must exceed 1")
    return 1.0 + (alpha - 1.0) * profile.l_star


def lambda_large(graph: TransitionGraph, noise, eta: float) -> float:
    """The longest time scale's rate: lambda(eta) at l* = l_large."""
    return noise.lambda_scale(eta, graph.l_large)


def require_assumption3(profile: JumpProfile, fields=None):
    """Raise if ceil(r_i/b) is ill-posed for any of the given fields."""
    bad = profile.violations if fields is None else tuple(
        i for i in profile.violations if i in fields)
    if bad:
        raise Assumption3Violation(
            f"r_i/b within {INTEGER_TOL} of an integer for fields {list(bad)}")


def summary_dict(graph: TransitionGraph, alpha: float | None = None) -> dict:
    """JSON-ready description used by the CLI."""
    p = graph.profile
    out = {
        "b": p.b if math.isfinite(p.b) else None,
        "nodes": list(range(1, graph.n + 1)),
        "edges": sorted([list(e) for e in graph.edges]),
        "classes": [{"members": sorted(c), "absorbing": bool(a)}
                    for c, a in zip(graph.classes, graph.absorbing)],
        "irreducible": graph.irreducible,
        "symmetric": graph.symmetric,
        "l_star": [int(v) for v in p.l_star],
        "r": [float(v) for v in p.r],
        "m_large": sorted(graph.m_large),
        "l_large": graph.l_large,
        "assumption3_violations": list(p.violations),
    }
    if alpha is not None:
        out["exponents"] = [float(e) for e in scaling_exponent(p, alpha)]
    return out
