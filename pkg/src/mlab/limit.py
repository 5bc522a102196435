"""Limiting-theory calculator.

A field-i escape event is a vector of l* signed jump sizes w (each clipped
at b) and l*-1 nonnegative flow gaps t'.  The jump-ODE map h_i flows the
state between jumps; the rate constants are

    q_i     = mu_i({h_i not in Omega_i}),
    q_{i,j} = mu_i({h_i in Omega_j}),

where mu_i is the product of the heavy-tail intensity nu_alpha (mass of
{|x| >= w} equal to w^{-alpha}, split p_plus/p_minus by sign) for each jump
and Lebesgue measure for each gap.  These are estimated by importance
sampling restricted to |w_j| >= w_min and gaps <= T_max, and then reduced
to a DTMC over all minima and a CTMC over the largest fields of a
communication class (with a cemetery state for transient classes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _kernels
from ._rng import CHUNK, PURPOSE_RATES, stream
from .errors import (Assumption3Violation, ConfigError, InsufficientSamples,
                     IntegratorFailure, SingularSystem, TruncationUnstable,
                     UnsupportedKind, ZeroExitRate)
from .graph import JumpProfile, TransitionGraph, require_assumption3
from .landscape import Landscape1D

#: reserved state index for the cemetery (fields are 1-based)
CEMETERY = 0

#: fixed-step size of the flow integrator (time units)
FLOW_DT = 1e-3


@dataclass(frozen=True)
class JumpVector:
    """l* signed jump sizes and the l*-1 flow gaps between them."""

    w: np.ndarray
    t_prime: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "t_prime", np.asarray(self.t_prime, dtype=float))
        if self.w.ndim != 1 or self.w.size < 1:
            raise ConfigError("jump vector needs at least one jump")
        if self.t_prime.shape != (self.w.size - 1,):
            raise ConfigError("need exactly one gap less than jumps")
        if np.any(self.t_prime < 0):
            raise ConfigError("flow gaps must be nonnegative")


def jump_ode(land: Landscape1D, profile: JumpProfile, i: int, jv: JumpVector,
             dt: float = FLOW_DT) -> float:
    """Endpoint h_i(w, t') of the jump-punctuated gradient flow from m_i."""
    l = int(profile.l_star[i - 1])
    if jv.w.size != l:
        raise ConfigError(f"field {i} needs {l} jumps, got {jv.w.size}")
    if land.kernel is None:
        raise ConfigError("landscape has no compiled kernel")
    kind, params = land.kernel
    m = float(profile.points.minima[i - 1])
    x = _kernels.jump_ode_endpoint(kind, params, m, jv.w, jv.t_prime,
                                   profile.b, land.L, dt)
    if not math.isfinite(x):
        raise IntegratorFailure(f"flow diverged for field {i} jumps {jv.w}")
    return float(x)


@dataclass(frozen=True)
class RateEstimate:
    """Monte Carlo estimate of q_i and its destination split."""

    field: int
    l_star: int
    q: float
    q_se: float
    targets: dict            # j -> (q_ij, se_ij), escaping destinations only
    w_min: float
    T_max: float
    n_samples: int
    n_escaped: int
    max_gap: float
    min_absw: float

    def target_q(self, j: int) -> float:
        return self.targets.get(j, (0.0, 0.0))[0]

    @property
    def total_target_q(self) -> float:
        return sum(v[0] for v in self.targets.values())


class RateTable:
    """Per-field rate estimates plus the parameters they share."""

    def __init__(self, estimates: dict, b: float, alpha: float, p_plus: float):
        self.estimates = dict(estimates)
        self.b = b
        self.alpha = alpha
        self.p_plus = p_plus

    def __getitem__(self, i: int) -> RateEstimate:
        return self.estimates[i]

    def __contains__(self, i: int) -> bool:
        return i in self.estimates

    @property
    def fields(self) -> list:
        return sorted(self.estimates)

    def to_json(self) -> dict:
        out = {}
        for i in self.fields:
            e = self.estimates[i]
            out[str(i)] = {
                "q": e.q, "q_se": e.q_se, "l_star": e.l_star,
                "targets": {str(j): {"q_ij": v[0], "se": v[1]}
                            for j, v in sorted(e.targets.items())},
                "w_min": e.w_min, "T_max": e.T_max,
                "n_samples": e.n_samples, "n_escaped": e.n_escaped,
                "max_gap": e.max_gap, "min_absw": e.min_absw,
            }
        return out


def _sample_pass(land, profile, i, alpha, p_plus, n_samples, w_min, T_max,
                 seed, stage, dt):
    """One full importance-sampling pass at a fixed T_max."""
    kind, params = land.kernel
    points = profile.points
    m = float(points.minima[i - 1])
    lo, hi = points.bounds(i)
    r = float(profile.r[i - 1])
    l = int(profile.l_star[i - 1])
    counts = np.zeros(points.n_min + 1, dtype=np.int64)
    n_esc = 0
    max_gap = -1.0
    min_absw = math.inf
    done = 0
    chunk_idx = 0
    while done < n_samples:
        nc = min(CHUNK, n_samples - done)
        rng = stream(seed, PURPOSE_RATES, i, stage, chunk_idx)
        v = rng.random((nc, l))
        u = rng.random((nc, l))
        w = w_min * (1.0 - v) ** (-1.0 / alpha)
        np.negative(w, where=u >= p_plus, out=w)
        if l > 1:
            tp = T_max * rng.random((nc, l - 1))
        else:
            tp = np.zeros((nc, 0))
        esc, mg, mw, _ = _kernels.rates_chunk(
            kind, params, m, lo, hi, points.saddles, r, profile.b, land.L,
            dt, w, tp, counts)
        if esc < 0:
            raise IntegratorFailure(f"flow diverged while sampling field {i}")
        n_esc += int(esc)
        max_gap = max(max_gap, mg)
        min_absw = min(min_absw, mw)
        done += nc
        chunk_idx += 1

    mass = w_min ** (-alpha * l) * (T_max ** (l - 1) if l > 1 else 1.0)
    p_hat = n_esc / n_samples
    q = mass * p_hat
    q_se = mass * math.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    targets = {}
    for j in range(1, points.n_min + 1):
        if counts[j] > 0:
            pj = counts[j] / n_samples
            targets[j] = (mass * pj,
                          mass * math.sqrt(pj * (1.0 - pj) / n_samples))
    return RateEstimate(field=i, l_star=l, q=q, q_se=q_se, targets=targets,
                        w_min=w_min, T_max=T_max, n_samples=n_samples,
                        n_escaped=n_esc, max_gap=max_gap, min_absw=min_absw)


def mc_estimate_rates(land: Landscape1D, profile: JumpProfile, noise, i: int,
                      n_samples: int = 10 ** 6, w_min: float | None = None,
                      T_max: float | None = None, seed: int = 0,
                      dt: float = FLOW_DT,
                      stability_tol: float = 0.01) -> RateEstimate:
    """Estimate q_i and the q_{i,j} for one field.

    Jumps are drawn from nu_alpha restricted to {|w| >= w_min} (total mass
    w_min^(-alpha)) and gaps uniformly on [0, T_max]; the estimate is the
    escape fraction scaled by the restricted mass.  When T_max is not given
    it is chosen adaptively by doubling from 8 time units until q_i moves
    by less than stability_tol.
    """
    if not hasattr(noise, "alpha"):
        raise UnsupportedKind("rate estimation needs a heavy-tailed noise model")
    if not 1 <= i <= profile.n:
        raise ConfigError(f"field index {i} out of range 1..{profile.n}")
    require_assumption3(profile, (i,))
    if n_samples < 1:
        raise ConfigError("n_samples must be positive")
    alpha = float(noise.alpha)
    if alpha <= 1:
        raise ConfigError("alpha must exceed 1")
    p_plus = float(getattr(noise, "p_plus", 0.5))
    r = float(profile.r[i - 1])
    if w_min is None:
        w_min = 0.02 * profile.b if math.isfinite(profile.b) else 0.9 * r
    if w_min <= 0:
        raise ConfigError("w_min must be positive")
    l = int(profile.l_star[i - 1])

    if l == 1:
        est = _sample_pass(land, profile, i, alpha, p_plus, n_samples,
                           w_min, 0.0, seed, 0, dt)
    elif T_max is not None:
        if T_max <= 0:
            raise ConfigError("T_max must be positive")
        est = _sample_pass(land, profile, i, alpha, p_plus, n_samples,
                           w_min, float(T_max), seed, 0, dt)
    else:
        prev = None
        est = None
        t = 8.0
        for stage in range(6):
            cur = _sample_pass(land, profile, i, alpha, p_plus, n_samples,
                               w_min, t, seed, stage, dt)
            if prev is not None and prev.q > 0 and \
                    abs(cur.q - prev.q) <= stability_tol * prev.q:
                est = cur
                break
            prev = cur
            t *= 2.0
        if est is None:
            raise TruncationUnstable(
                f"q_{i} still moving more than {stability_tol:.0%} per "
                f"T_max doubling at T_max = {t / 2:.0f}")

    if est.n_escaped == 0:
        raise InsufficientSamples(
            f"no escaping samples for field {i}; raise n_samples or w_min")
    return est


def estimate_table(land: Landscape1D, profile: JumpProfile, noise,
                   n_samples: int = 10 ** 6, w_min: float | None = None,
                   T_max: float | None = None, seed: int = 0,
                   fields=None, dt: float = FLOW_DT) -> RateTable:
    """Rate estimates for several fields (all of them by default)."""
    if fields is None:
        fields = range(1, profile.n + 1)
    estimates = {}
    for i in fields:
        estimates[i] = mc_estimate_rates(land, profile, noise, i,
                                         n_samples=n_samples, w_min=w_min,
                                         T_max=T_max, seed=seed, dt=dt)
    return RateTable(estimates, b=profile.b, alpha=float(noise.alpha),
                     p_plus=float(getattr(noise, "p_plus", 0.5)))


@dataclass(frozen=True)
class DtmcModel:
    """Embedded jump chain over all minima: P(i, j) = q_ij / sum_j q_ij."""

    P: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.P[i - 1]


def dtmc(table: RateTable) -> DtmcModel:
    """Build the jump chain, renormalizing rows by the sampled escape mass."""
    n = max(table.fields)
    if table.fields != list(range(1, n + 1)):
        raise ConfigError("dtmc needs rate estimates for every field")
    P = np.zeros((n, n))
    for i in range(1, n + 1):
        est = table[i]
        total = est.total_target_q
        if total <= 0:
            raise ZeroExitRate(f"no escape mass estimated for field {i}")
        for j, (qij, _) in est.targets.items():
            P[i - 1, j - 1] = qij / total
    return DtmcModel(P=P)


@dataclass(frozen=True)
class AbsorptionProbs:
    """p_{i,j}: where the jump chain first leaves the small fields of a class.

    ``targets`` are the class's large fields plus CEMETERY, which stands for
    every state outside the class.
    """

    members: tuple
    large: tuple
    targets: tuple
    matrix: np.ndarray

    def prob(self, i: int, j: int) -> float:
        return float(self.matrix[self.members.index(i), self.targets.index(j)])


def absorption_probs(dt: DtmcModel, graph: TransitionGraph,
                     class_index: int) -> AbsorptionProbs:
    """Solve the absorbing-chain system over a class's small fields."""
    if not 0 <= class_index < len(graph.classes):
        raise ConfigError(f"class index {class_index} out of range")
    cls = sorted(graph.classes[class_index])
    l_star = graph.profile.l_star
    l_g = max(int(l_star[i - 1]) for i in cls)
    large = [i for i in cls if int(l_star[i - 1]) == l_g]
    small = [i for i in cls if int(l_star[i - 1]) < l_g]
    targets = tuple(large) + (CEMETERY,)
    mat = np.zeros((len(cls), len(targets)))
    for row, i in enumerate(cls):
        if i in large:
            mat[row, targets.index(i)] = 1.0
    if small:
        P = dt.P
        ns = len(small)
        Pss = np.array([[P[a - 1, b - 1] for b in small] for a in small])
        B = np.zeros((ns, len(targets)))
        for row, a in enumerate(small):
            for col, j in enumerate(large):
                B[row, col] = P[a - 1, j - 1]
            B[row, -1] = sum(P[a - 1, k - 1] for k in range(1, dt.n + 1)
                             if k not in cls)
        try:
            X = linalg.solve(np.eye(ns) - Pss, B)
        except linalg.LinAlgError as exc:
            raise SingularSystem(
                f"small fields {small} have no escape route") from exc
        for row, a in enumerate(small):
            mat[cls.index(a)] = X[row]
    return AbsorptionProbs(members=tuple(cls), large=tuple(large),
                           targets=targets, matrix=mat)


@dataclass(frozen=True)
class CtmcModel:
    """Limiting chain over a class's large fields.

    ``states`` are field indices (CEMETERY first when the class is
    transient); ``hold`` the exponential holding rates; ``kernel`` the jump
    kernel including dummy self-jumps.  ``pi`` maps every class member to
    its initial distribution over states.
    """

    states: tuple
    hold: np.ndarray
    kernel: np.ndarray
    killed: bool
    members: tuple
    pi: dict

    def generator(self) -> np.ndarray:
        q = self.kernel * self.hold[:, None]
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    def state_index(self, s: int) -> int:
        return self.states.index(s)


def ctmc_generator(table: RateTable, dt: DtmcModel, graph: TransitionGraph,
                   class_index: int, mass_tol: float = 1e-9) -> CtmcModel:
    """Assemble the limiting CTMC for one communication class.

    Large-field jumps that land in a small field are rerouted through the
    DTMC absorption probabilities, which can produce dummy self-jumps; mass
    leaving the class goes to the cemetery and marks the chain as killed.
    """
    ap = absorption_probs(dt, graph, class_index)
    cls = list(ap.members)
    large = list(ap.large)
    small = [i for i in cls if i not in large]
    n_all = dt.n

    qbar = {i: {j: 0.0 for j in large + [CEMETERY]} for i in large}
    for i in large:
        est = table[i]
        for k, (qik, _) in est.targets.items():
            if k in large:
                if k != i:
                    qbar[i][k] += qik
            elif k in small:
                for j in large:
                    qbar[i][j] += qik * ap.prob(k, j)
                qbar[i][CEMETERY] += qik * ap.prob(k, CEMETERY)
            else:
                qbar[i][CEMETERY] += qik
    killed = (not graph.absorbing[class_index]) or any(
        qbar[i][CEMETERY] > mass_tol for i in large)

    states = ((CEMETERY,) if killed else ()) + tuple(large)
    ns = len(states)
    hold = np.zeros(ns)
    kernel = np.zeros((ns, ns))
    for i in large:
        si = states.index(i)
        hold[si] = table[i].total_target_q
        for j in large + ([CEMETERY] if killed else []):
            kernel[si, states.index(j)] = qbar[i][j] / hold[si]
        # the unrouted remainder is the dummy self-jump mass
        kernel[si, si] += max(0.0, 1.0 - kernel[si].sum())
    if killed:
        s0 = states.index(CEMETERY)
        hold[s0] = 1.0
        kernel[s0, s0] = 1.0

    pi = {}
    for i in cls:
        if i in large:
            pi[i] = {i: 1.0}
        else:
            pi[i] = {j: ap.prob(i, j) for j in ap.targets
                     if ap.prob(i, j) > 0.0}
    return CtmcModel(states=states, hold=hold, kernel=kernel, killed=killed,
                     members=tuple(cls), pi=pi)


@dataclass(frozen=True)
class CtmcPath:
    """Piecewise-constant path: state states[k] on [times[k], times[k+1])."""

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.states[max(k, 0)])


def sample_ctmc_path(ctmc: CtmcModel, start: int, horizon: float,
                     rng: np.random.Generator) -> CtmcPath:
    """Simulate holding times and jumps (dummy self-jumps included).

    ``start`` may be any class member; small fields enter through a draw
    from pi_G.  The path ends at the horizon, or at the cemetery.
    """
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    if start not in ctmc.members and start not in ctmc.states:
        raise ConfigError(f"state {start} is not in this class")
    if start in ctmc.states:
        s = start
    else:
        dist = ctmc.pi[start]
        opts = sorted(dist)
        s = int(rng.choice(opts, p=[dist[o] for o in opts]))
    times = [0.0]
    states = [s]
    t = 0.0
    while s != CEMETERY:
        si = ctmc.state_index(s)
        rate = ctmc.hold[si]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        s = int(ctmc.states[rng.choice(len(ctmc.states), p=ctmc.kernel[si])])
        times.append(t)
        states.append(s)
    return CtmcPath(times=np.array(times), states=np.array(states, dtype=np.int64),
                    horizon=float(horizon))
