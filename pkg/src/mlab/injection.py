"""Heavy-tailed noise injection for finite-sum objectives.

The perturbed direction is g_heavy = g_SB + Z * (g_SB* - g_LB) with a
positive Pareto multiplier Z = c * W, applied as theta - phi_b(eta * g_heavy).
A two-phase schedule runs the injected optimizer first and plain clipped
large-batch descent afterwards; expected sharpness measures the flatness of
the solution it lands on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BatchTooLarge, ConfigError
from .landscape import _multiwell_f_np, _multiwell_fprime_np
from .sgd import truncate


class LeastSquares:
    """Ridge-regularized least squares: mean of 0.5*(a_i . theta - y_i)^2."""

    def __init__(self, A, y, reg=0.0):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.reg = float(reg)
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ConfigError("A must be (n, d) and y (n,)")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def loss(self, theta, idx=None):
        A = self.A if idx is None else self.A[idx]
        y = self.y if idx is None else self.y[idx]
        res = A @ theta - y
        return 0.5 * float(np.mean(res * res)) + 0.5 * self.reg * float(theta @ theta)

    def grad(self, theta, idx=None):
        A = self.A if idx is None else self.A[idx]
        y = self.y if idx is None else self.y[idx]
        return A.T @ (A @ theta - y) / A.shape[0] + self.reg * theta


class LogisticBlobs:
    """Binary logistic regression on two Gaussian blobs, labels in {-1, +1}."""

    def __init__(self, X, y, reg=0.0):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.reg = float(reg)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def loss(self, theta, idx=None):
        X = self.X if idx is None else self.X[idx]
        y = self.y if idx is None else self.y[idx]
        margins = y * (X @ theta)
        return float(np.mean(np.logaddexp(0.0, -margins))) \
            + 0.5 * self.reg * float(theta @ theta)

    def grad(self, theta, idx=None):
        X = self.X if idx is None else self.X[idx]
        y = self.y if idx is None else self.y[idx]
        s = 1.0 / (1.0 + np.exp(y * (X @ theta)))
        return -(X.T @ (y * s)) / X.shape[0] + self.reg * theta


class MultiWellSum:
    """Scalar problem whose mean loss is the four-well test function.

    Per-example losses add a centered linear tilt eps_i * theta, so the full
    gradient is exactly f' while small batches see heavy disagreement-free
    noise of scale ``jitter``.
    """

    def __init__(self, eps):
        self.eps = np.asarray(eps, dtype=float)
        self.d = 1

    @property
    def n(self):
        return self.eps.size

    def loss(self, theta, idx=None):
        x = float(theta[0])
        eps = self.eps if idx is None else self.eps[idx]
        return float(_multiwell_f_np(x)) + float(np.mean(eps)) * x

    def grad(self, theta, idx=None):
        x = float(theta[0])
        eps = self.eps if idx is None else self.eps[idx]
        return np.array([float(_multiwell_fprime_np(x)) + float(np.mean(eps))])


def least_squares(n=200, d=10, reg=1e-2, noise=0.1, seed=7) -> LeastSquares:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    theta_true = rng.standard_normal(d)
    y = A @ theta_true + noise * rng.standard_normal(n)
    return LeastSquares(A, y, reg=reg)


def logistic_blobs(n=200, d=5, sep=2.0, reg=1e-2, seed=7) -> LogisticBlobs:
    rng = np.random.default_rng(seed)
    half = n // 2
    center = np.full(d, sep / math.sqrt(d))
    X = np.vstack([rng.standard_normal((half, d)) + center,
                   rng.standard_normal((n - half, d)) - center])
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    return LogisticBlobs(X, y, reg=reg)


def multiwell(n=100, jitter=0.5, seed=7) -> MultiWellSum:
    rng = np.random.default_rng(seed)
    eps = jitter * rng.standard_normal(n)
    eps -= eps.mean()
    return MultiWellSum(eps)


_PROBLEMS = {
    "least-squares": least_squares,
    "logistic": logistic_blobs,
    "multiwell": multiwell,
}


def make_problem(name: str, **kwargs):
    if name not in _PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(_PROBLEMS)}")
    return _PROBLEMS[name](**kwargs)


@dataclass(frozen=True)
class InjectionConfig:
    """Hyperparameters of the injected optimizer and its phase schedule."""

    eta: float
    b: float
    c: float
    alpha: float
    sb: int
    lb: int
    sb_star: int | None = None
    mode: str = "independent"
    phase1: int = 0
    phase2: int = 0

    def __post_init__(self):
        if self.eta <= 0 or self.b <= 0:
            raise ConfigError("eta and b must be positive")
        if self.c < 0:
            raise ConfigError("c must be nonnegative")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.mode not in ("independent", "shared"):
            raise ConfigError("mode must be 'independent' or 'shared'")
        if self.sb < 1 or self.lb < 1:
            raise ConfigError("batch sizes must be positive")
        if self.lb < self.sb:
            raise ConfigError("|LB| must be at least |SB|")
        if self.sb_star is None:
            object.__setattr__(self, "sb_star", self.sb)
        if self.sb_star < 1:
            raise ConfigError("batch sizes must be positive")
        if self.phase1 < 0 or self.phase2 < 0:
            raise ConfigError("phase lengths must be nonnegative")


def _check_batch(size: int, n: int):
    if size > n:
        raise BatchTooLarge(f"batch of {size} from only {n} examples")


def draw_batches(problem, cfg: InjectionConfig, rng: np.random.Generator):
    """Fresh without-replacement batches (SB, SB*, LB); shared mode reuses SB."""
    _check_batch(max(cfg.sb, cfg.sb_star, cfg.lb), problem.n)
    sb = rng.choice(problem.n, size=cfg.sb, replace=False)
    if cfg.mode == "shared":
        sb_star = sb
    else:
        sb_star = rng.choice(problem.n, size=cfg.sb_star, replace=False)
    lb = rng.choice(problem.n, size=cfg.lb, replace=False)
    return sb, sb_star, lb


def heavy_step(problem, cfg: InjectionConfig, theta, rng: np.random.Generator,
               batches=None):
    """One injected update; always exactly one multiplier draw."""
    if batches is None:
        batches = draw_batches(problem, cfg, rng)
    sb, sb_star, lb = batches
    z = cfg.c * (1.0 - rng.random()) ** (-1.0 / cfg.alpha)
    g = problem.grad(theta, sb) + z * (problem.grad(theta, sb_star)
                                       - problem.grad(theta, lb))
    return theta - truncate(cfg.eta * g, cfg.b)


def plain_sb_step(problem, cfg: InjectionConfig, theta, rng: np.random.Generator,
                  batch=None):
    """Baseline clipped small-batch step (no injection)."""
    if batch is None:
        _check_batch(cfg.sb, problem.n)
        batch = rng.choice(problem.n, size=cfg.sb, replace=False)
    return theta - truncate(cfg.eta * problem.grad(theta, batch), cfg.b)


def _lb_step(problem, cfg: InjectionConfig, theta, rng: np.random.Generator):
    _check_batch(cfg.lb, problem.n)
    lb = rng.choice(problem.n, size=cfg.lb, replace=False)
    return theta - truncate(cfg.eta * problem.grad(theta, lb), cfg.b)


@dataclass(frozen=True)
class OptimizerTrace:
    """Final parameters and a stride-sampled loss curve."""

    theta: np.ndarray
    steps: np.ndarray
    loss: np.ndarray


def run_two_phase(problem, cfg: InjectionConfig, theta0,
                  rng: np.random.Generator, record_stride: int = 10) -> OptimizerTrace:
    """phase1 injected steps followed by phase2 clipped large-batch steps."""
    if record_stride < 1:
        raise ConfigError("record_stride must be at least 1")
    theta = np.array(theta0, dtype=float)
    steps = [0]
    losses = [problem.loss(theta)]
    for k in range(cfg.phase1 + cfg.phase2):
        if k < cfg.phase1:
            theta = heavy_step(problem, cfg, theta, rng)
        else:
            theta = _lb_step(problem, cfg, theta, rng)
        if (k + 1) % record_stride == 0 or k + 1 == cfg.phase1 + cfg.phase2:
            steps.append(k + 1)
            losses.append(problem.loss(theta))
    return OptimizerTrace(theta=theta, steps=np.array(steps),
                          loss=np.array(losses))


def run_plain_sb(problem, cfg: InjectionConfig, theta0,
                 rng: np.random.Generator, n_steps: int | None = None,
                 record_stride: int = 10) -> OptimizerTrace:
    """Plain clipped small-batch SGD for the same step budget."""
    if n_steps is None:
        n_steps = cfg.phase1 + cfg.phase2
    theta = np.array(theta0, dtype=float)
    steps = [0]
    losses = [problem.loss(theta)]
    for k in range(n_steps):
        theta = plain_sb_step(problem, cfg, theta, rng)
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            steps.append(k + 1)
            losses.append(problem.loss(theta))
    return OptimizerTrace(theta=theta, steps=np.array(steps),
                          loss=np.array(losses))


def expected_sharpness(problem, theta_star, delta: float = 0.01,
                       n_draws: int = 100,
                       rng: np.random.Generator | None = None) -> float:
    """Mean |L(theta* + nu) - L(theta*)| under nu ~ N(0, delta^2 I)."""
    if n_draws < 1:
        raise ConfigError("n_draws must be at least 1")
    if rng is None:
        rng = np.random.default_rng(0)
    theta_star = np.asarray(theta_star, dtype=float)
    base = problem.loss(theta_star)
    acc = 0.0
    for _ in range(n_draws):
        nu = delta * rng.standard_normal(theta_star.size)
        acc += abs(problem.loss(theta_star + nu) - base)
    return acc / n_draws
