"""Stochastic first-order methods matching the upper-bound rates.

mirror_descent_l1 runs entropic mirror descent on the 2d-simplex lift of
the l1 ball: theta = r(u - v) with (u, v) on the simplex, multiplicative
updates, uniform init.  sgd_l2 is projected SGD on an l2 ball with the
1/sqrt(t) step.  Both average all iterates and are bitwise deterministic
given (config, seed).

grad_oracle contract: callable(theta, rng) -> subgradient estimate with
E[g | theta] in the population subdifferential.  The rng argument is the
run's own generator; oracles backed by a private stream may ignore it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import NormBall, project_l2_ball

__all__ = [
    "OPTIMIZER_METHODS",
    "OptimizerConfig",
    "OptimizerRun",
    "mirror_descent_l1",
    "sgd_l2",
    "step_size_for",
]

OPTIMIZER_METHODS = ("mirror_descent_l1", "sgd_l2")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str
    domain: NormBall
    dim: int
    steps: int
    grad_bound: float
    step_size_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.method not in OPTIMIZER_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.grad_bound <= 0.0:
            raise ValueError("grad_bound must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.step_size_scale <= 0.0:
            raise ValueError("step_size_scale must be positive")


@dataclass(frozen=True)
class OptimizerRun:
    averaged: np.ndarray
    risk_gap: float
    seed: int | None
    iterates: np.ndarray | None = None


def step_size_for(method: str, domain: NormBall, grad_bound: float, n: int,
                  d: int) -> float:
    """Default step size.

    Mirror descent uses the fixed eta = sqrt(2 log 2d) / (r M_inf sqrt(n))
    tuned to the lift's entropy diameter (the lift gradients scale with r,
    hence the r in the denominator).  For SGD the returned value is the
    t = 1 step r2/M2, to be decayed as 1/sqrt(t) by the caller.
    """
    if method == "mirror_descent_l1":
        return math.sqrt(2.0 * math.log(2 * d)) / (domain.radius * grad_bound * math.sqrt(n))
    if method == "sgd_l2":
        return domain.radius / grad_bound
    raise ValueError(f"unknown method {method!r}")


def _prepare(config: OptimizerConfig, rng, expected_p) -> tuple:
    if config.domain.p != expected_p:
        raise ValueError(f"method needs an l{expected_p} ball domain")
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    return np.random.default_rng(rng), None


def mirror_descent_l1(grad_oracle, config: OptimizerConfig, rng,
                      risk_gap_fn=None, record_iterates: bool = False) -> OptimizerRun:
    """Entropic mirror descent over the l1 ball of radius r.

    PARAMETERS
      grad_oracle : callable(theta, rng) -> array (dim,)
      config      : method must be mirror_descent_l1; grad_bound is M_inf
      rng         : integer seed or np.random.Generator
      risk_gap_fn : optional callable(theta_avg) -> excess risk

    RETURNS OptimizerRun with the uniform average of the n visited
    iterates (the init counts; the point produced by the last gradient
    does not).
    """
    gen, seed = _prepare(config, rng, 1)
    d, n, r = config.dim, config.steps, config.domain.radius
    eta = config.step_size_scale * step_size_for(
        "mirror_descent_l1", config.domain, config.grad_bound, n, d
    )
    lw = np.full(2 * d, -math.log(2 * d))  # log-weights on the lift, uniform
    theta = np.zeros(d)
    total = np.zeros(d)
    trace = np.empty((n, d)) if record_iterates else None
    for t in range(n):
        if record_iterates:
            trace[t] = theta
        total += theta
        g = np.asarray(grad_oracle(theta, gen), dtype=float)
        lw[:d] -= eta * r * g
        lw[d:] += eta * r * g
        lw -= lw.max()
        w = np.exp(lw)
        w /= w.sum()
        np.log(w, out=lw)
        theta = r * (w[:d] - w[d:])
    averaged = total / n
    gap = float(risk_gap_fn(averaged)) if risk_gap_fn is not None else math.nan
    return OptimizerRun(averaged, gap, seed, trace)


def sgd_l2(grad_oracle, config: OptimizerConfig, rng,
           risk_gap_fn=None, record_iterates: bool = False) -> OptimizerRun:
    """Projected SGD on the l2 ball, step r2/(M2 sqrt(t)), averaged."""
    gen, seed = _prepare(config, rng, 2)
    d, n, r = config.dim, config.steps, config.domain.radius
    base = config.step_size_scale * step_size_for(
        "sgd_l2", config.domain, config.grad_bound, n, d
    )
    theta = np.zeros(d)
    total = np.zeros(d)
    trace = np.empty((n, d)) if record_iterates else None
    for t in range(n):
        if record_iterates:
            trace[t] = theta
        total += theta
        g = np.asarray(grad_oracle(theta, gen), dtype=float)
        theta = project_l2_ball(theta - (base / math.sqrt(t + 1.0)) * g, r)
    averaged = total / n
    gap = float(risk_gap_fn(averaged)) if risk_gap_fn is not None else math.nan
    return OptimizerRun(averaged, gap, seed, trace)
