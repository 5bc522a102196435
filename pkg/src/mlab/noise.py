"""Gradient-noise distributions and tail diagnostics.

The heavy-tailed family used throughout is a signed Pareto: |Z|/c is
Pareto(alpha) on [1, inf), so the tail function is
H(x) = P(|Z| >= x) = (x/c)^(-alpha) for x >= c and 1 below c.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, InsufficientSamples, UnsupportedKind


def _tail(alpha: float, c: float, x: float) -> float:
    if x <= c:
        return 1.0
    if c == 0.0:
        return 0.0
    return (x / c) ** (-alpha)


def _lambda_scale(alpha: float, c: float, eta: float, l_star: int) -> float:
    if eta <= 0:
        raise ConfigError("eta must be positive")
    if l_star < 1 or int(l_star) != l_star:
        raise ConfigError("l_star must be a positive integer")
    h = _tail(alpha, c, 1.0 / eta)
    return h * (h / eta) ** (int(l_star) - 1)


class SignedPareto:
    """Z = c * U * W with W ~ Pareto(alpha) on [1, inf) and U = +-1.

    ``p_plus`` is the probability of the positive sign.  c = 0 degenerates
    to the zero distribution (useful for noiseless runs).
    """

    kind = "signed-pareto"
    dim = 1

    def __init__(self, alpha: float, c: float, p_plus: float = 0.5):
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
        if c < 0:
            raise ConfigError("c must be nonnegative")
        if not 0.0 <= p_plus <= 1.0:
            raise ConfigError("p_plus must lie in [0, 1]")
        self.alpha = float(alpha)
        self.c = float(c)
        self.p_plus = float(p_plus)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.random(n)
        u = rng.random(n)
        w = (1.0 - v) ** (-1.0 / self.alpha)
        sign = np.where(u < self.p_plus, 1.0, -1.0)
        return self.c * sign * w

    def tail(self, x: float) -> float:
        """H(x) = P(|Z| >= x) for x >= 0."""
        if x < 0:
            raise ConfigError("tail is defined for x >= 0")
        return _tail(self.alpha, self.c, x)

    def lambda_scale(self, eta: float, l_star: int) -> float:
        """Exit-rate scale lambda(eta) = H(1/eta) * (H(1/eta)/eta)^(l*-1)."""
        return _lambda_scale(self.alpha, self.c, eta, l_star)

    def spec(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "c": self.c,
                "p_plus": self.p_plus}

    def __repr__(self):
        return f"SignedPareto(alpha={self.alpha}, c={self.c}, p_plus={self.p_plus})"


class Gaussian:
    """Light-tailed reference noise Z ~ N(0, sigma^2)."""

    kind = "gaussian"
    dim = 1

    def __init__(self, sigma: float):
        if sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        self.sigma = float(sigma)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sigma * rng.standard_normal(n)

    def tail(self, x: float) -> float:
        raise UnsupportedKind("tail asymptotics are only defined for heavy-tailed noise")

    def lambda_scale(self, eta: float, l_star: int) -> float:
        raise UnsupportedKind("exit-rate scale is only defined for heavy-tailed noise")

    def spec(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma}

    def __repr__(self):
        return f"Gaussian(sigma={self.sigma})"


class IsotropicPareto2D:
    """Z = c * W * (cos T, sin T) with W ~ Pareto(alpha), T uniform on [0, 2pi)."""

    kind = "isotropic-pareto-2d"
    dim = 2

    def __init__(self, alpha: float, c: float):
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
        if c < 0:
            raise ConfigError("c must be nonnegative")
        self.alpha = float(alpha)
        self.c = float(c)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.random(n)
        theta = 2.0 * math.pi * rng.random(n)
        w = self.c * (1.0 - v) ** (-1.0 / self.alpha)
        return np.column_stack((w * np.cos(theta), w * np.sin(theta)))

    def tail(self, x: float) -> float:
        """H(x) = P(|Z| >= x) on the norm."""
        if x < 0:
            raise ConfigError("tail is defined for x >= 0")
        return _tail(self.alpha, self.c, x)

    def lambda_scale(self, eta: float, l_star: int) -> float:
        return _lambda_scale(self.alpha, self.c, eta, l_star)

    def spec(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "c": self.c}

    def __repr__(self):
        return f"IsotropicPareto2D(alpha={self.alpha}, c={self.c})"


_NOISE_KEYS = {
    "signed-pareto": {"kind", "alpha", "c", "p_plus"},
    "gaussian": {"kind", "sigma"},
    "isotropic-pareto-2d": {"kind", "alpha", "c"},
}


def from_spec(d: dict):
    """Build a noise distribution from its JSON description."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("noise spec must be an object with a 'kind'")
    kind = d["kind"]
    allowed = _NOISE_KEYS.get(kind)
    if allowed is None:
        raise ConfigError(f"unknown noise kind: {kind!r}")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown noise keys: {sorted(extra)}")
    if kind == "signed-pareto":
        if "alpha" not in d or "c" not in d:
            raise ConfigError("signed-pareto needs 'alpha' and 'c'")
        return SignedPareto(d["alpha"], d["c"], d.get("p_plus", 0.5))
    if kind == "gaussian":
        if "sigma" not in d:
            raise ConfigError("gaussian needs 'sigma'")
        return Gaussian(d["sigma"])
    if "alpha" not in d or "c" not in d:
        raise ConfigError("isotropic-pareto-2d needs 'alpha' and 'c'")
    return IsotropicPareto2D(d["alpha"], d["c"])


def hill_tail_index(samples, k: int) -> float:
    """Hill estimator of the tail index from the top k order statistics.

    With |X|_(1) >= |X|_(2) >= ... the estimate is
    k / sum_{i<=k} log(|X|_(i) / |X|_(k+1)).
    """
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if k < 1:
        raise ConfigError("k must be at least 1")
    if x.size < k + 1:
        raise InsufficientSamples(f"need at least k+1 = {k + 1} samples, got {x.size}")
    top = np.sort(x)[-(k + 1):]
    if top[0] <= 0:
        raise InsufficientSamples("top k+1 order statistics must be positive")
    logs = np.log(top[1:]) - math.log(top[0])
    s = float(np.sum(logs))
    if s <= 0:
        raise InsufficientSamples("degenerate order statistics in Hill estimator")
    return k / s
