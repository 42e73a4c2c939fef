"""The five LMO optimizer variants and their step-size schedules.

Every method advances one iteration at a time: draw a sample, refresh the
momentum, then move each layer by a linear-minimization-oracle step inside
its norm ball. The variants differ only in how the momentum folds in the
fresh stochastic gradient:

* ``gluon``: convex combination M = beta*M + (1-beta)*grad(X).
* ``gluon_mvr1``: M = grad(X) + beta*(M - grad(X_prev)), both gradients from
  the same sample, so the sampling noise cancels to first order.
* ``gluon_mvr1_decreasing``: same update with beta_k = 1 - (k+1)^(-2/3) and
  per-layer radius t_i * (k+1)^(-2/3).
* ``gluon_mvr2``: keeps a separate variance-reduced estimator g (parameter q)
  and applies vanilla momentum on top of it.
* ``gluon_mvr3``: mvr2 plus the correction beta*(grad(X) - grad(X_prev)).
* ``muon_mvr``: whole-space ball of radius eta, multiplicative weight decay
  (1 - beta) after the move, momentum refreshed with the next sample at both
  the old point and the decayed new point.

The recursions that reference the previous momentum or iterate are skipped
at k = 0: the initial momentum (and estimator) comes from ``init_state``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .norms import lmo_direction
from .oracles import (
    ModelShape,
    ParamVector,
    Problem,
    ProblemConstants,
    Sample,
    copy_blocks,
    draw_sample,
)


class Method(str, Enum):
    GLUON = "gluon"
    GLUON_MVR1 = "gluon_mvr1"
    GLUON_MVR1_DECREASING = "gluon_mvr1_decreasing"
    GLUON_MVR2 = "gluon_mvr2"
    GLUON_MVR3 = "gluon_mvr3"
    MUON_MVR = "muon_mvr"


MVR_ESTIMATOR_METHODS = (Method.GLUON_MVR2, Method.GLUON_MVR3)


@dataclass(frozen=True)
class OptimizerConfig:
    """Method tag plus (eta, beta/alpha, q, K).

    ``alpha`` defaults to 1 - beta; it is stored explicitly because muon_mvr
    uses beta as the weight decay and alpha as the momentum mixing weight.
    """

    method: Method
    eta: float
    beta: float = 0.9
    alpha: float | None = None
    q: float = 1.0
    K: int = 1000
    schedule_note: str = ""

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 - self.beta)
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.method in MVR_ESTIMATOR_METHODS and not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1] for {self.method.value}, got {self.q}")
        if self.method is Method.MUON_MVR and self.alpha < self.beta:
            raise ValueError("muon_mvr requires alpha >= beta")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")


@dataclass
class OptimizerState:
    k: int
    X: ParamVector
    X_prev: ParamVector
    M: ParamVector
    g: ParamVector | None
    rng: np.random.Generator
    last_sample: Sample | None = None


def init_state(
    config: OptimizerConfig,
    shape: ModelShape,
    X0: ParamVector,
    problem: Problem,
    rng: np.random.Generator,
) -> OptimizerState:
    """Draw the initial sample and set M (and g, where used) to its gradient at X0."""
    shape.validate(X0)
    sample = draw_sample(rng)
    M = problem.stoch_grad(sample, X0)
    g = copy_blocks(M) if config.method in MVR_ESTIMATOR_METHODS else None
    return OptimizerState(
        k=0,
        X=copy_blocks(X0),
        X_prev=copy_blocks(X0),
        M=M,
        g=g,
        rng=rng,
        last_sample=sample,
    )


def lmo_step(
    shape: ModelShape,
    X: ParamVector,
    M: ParamVector,
    radii: list[float],
) -> ParamVector:
    """Per layer, X_i - radius_i * lmo_direction(norm_i, M_i).

    Moves at most radius_i in the layer norm and drops the inner product
    <M_i, X_i' - X_i> to -radius_i * ||M_i||_*.
    """
    shape.validate(X)
    shape.validate(M)
    if len(radii) != shape.p or any(r <= 0 for r in radii):
        raise ValueError("need one positive radius per layer")
    return [
        x - r * lmo_direction(spec.norm, m)
        for spec, x, m, r in zip(shape.layers, X, M, radii)
    ]


def _constant_radii(shape: ModelShape, eta: float) -> list[float]:
    return [s.t_i * eta for s in shape.layers]


def _advance(state, problem, M_new, radii, g_new=None, sample=None):
    X_next = lmo_step(problem.shape, state.X, M_new, radii)
    state.X_prev = state.X
    state.X = X_next
    state.M = M_new
    if g_new is not None:
        state.g = g_new
    if sample is not None:
        state.last_sample = sample
    state.k += 1
    return state


def step_gluon(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """Heavy-ball baseline: M = beta*M + (1-beta)*grad, constant radius t_i*eta."""
    if state.k == 0:
        M_new, sample = state.M, None
    else:
        sample = draw_sample(state.rng)
        grad = problem.stoch_grad(sample, state.X)
        M_new = [config.beta * m + config.alpha * gi for m, gi in zip(state.M, grad)]
    return _advance(state, problem, M_new, _constant_radii(problem.shape, config.eta), sample=sample)


def step_gluon_mvr1(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """M = grad(X) + beta*(M - grad(X_prev)), same sample at both points."""
    if state.k == 0:
        M_new, sample = state.M, None
    else:
        sample = draw_sample(state.rng)
        g_here = problem.stoch_grad(sample, state.X)
        g_prev = problem.stoch_grad(sample, state.X_prev)
        M_new = [gh + config.beta * (m - gp) for gh, m, gp in zip(g_here, state.M, g_prev)]
    return _advance(state, problem, M_new, _constant_radii(problem.shape, config.eta), sample=sample)


def decreasing_beta(k: int) -> float:
    """Momentum decay 1 - (k+1)^(-2/3) for the decreasing-step variant."""
    return 1.0 - (k + 1) ** (-2.0 / 3.0)


def decreasing_radii(shape: ModelShape, k: int) -> list[float]:
    """Per-layer radius t_i * (k+1)^(-2/3) at step k."""
    scale = (k + 1) ** (-2.0 / 3.0)
    return [s.t_i * scale for s in shape.layers]


def step_gluon_mvr1_decreasing(
    state: OptimizerState, config: OptimizerConfig, problem: Problem
) -> OptimizerState:
    """mvr1 with beta_k = 1 - (k+1)^(-2/3) and radius t_i * (k+1)^(-2/3)."""
    if state.k == 0:
        M_new, sample = state.M, None
    else:
        beta_k = decreasing_beta(state.k)
        sample = draw_sample(state.rng)
        g_here = problem.stoch_grad(sample, state.X)
        g_prev = problem.stoch_grad(sample, state.X_prev)
        M_new = [gh + beta_k * (m - gp) for gh, m, gp in zip(g_here, state.M, g_prev)]
    return _advance(state, problem, M_new, decreasing_radii(problem.shape, state.k), sample=sample)


def step_gluon_mvr2(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """Variance-reduced estimator g (parameter q) under vanilla momentum."""
    if state.g is None:
        raise ValueError("state was not initialized for an estimator method")
    if state.k == 0:
        g_new, M_new, sample = state.g, state.M, None
    else:
        sample = draw_sample(state.rng)
        g_here = problem.stoch_grad(sample, state.X)
        g_prev = problem.stoch_grad(sample, state.X_prev)
        g_new = [
            gh + (1.0 - config.q) * (g - gp)
            for gh, g, gp in zip(g_here, state.g, g_prev)
        ]
        M_new = [config.beta * m + (1.0 - config.beta) * gn for m, gn in zip(state.M, g_new)]
    return _advance(
        state, problem, M_new, _constant_radii(problem.shape, config.eta), g_new=g_new, sample=sample
    )


def step_gluon_mvr3(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """mvr2 plus the sample-difference correction beta*(grad(X) - grad(X_prev))."""
    if state.g is None:
        raise ValueError("state was not initialized for an estimator method")
    if state.k == 0:
        g_new, M_new, sample = state.g, state.M, None
    else:
        sample = draw_sample(state.rng)
        g_here = problem.stoch_grad(sample, state.X)
        g_prev = problem.stoch_grad(sample, state.X_prev)
        g_new = [
            gh + (1.0 - config.q) * (g - gp)
            for gh, g, gp in zip(g_here, state.g, g_prev)
        ]
        M_new = [
            config.beta * m + (1.0 - config.beta) * gn + config.beta * (gh - gp)
            for m, gn, gh, gp in zip(state.M, g_new, g_here, g_prev)
        ]
    return _advance(
        state, problem, M_new, _constant_radii(problem.shape, config.eta), g_new=g_new, sample=sample
    )


def step_muon_mvr(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """Whole-space ball of radius eta, then weight decay, then momentum refresh.

    The layers share one ball radius eta (the t_i multipliers do not apply).
    The momentum update draws the next sample and evaluates it at the old
    iterate and at the decayed new iterate, which is the X fed to every
    subsequent step.
    """
    shape = problem.shape
    radii = [config.eta] * shape.p
    X_moved = lmo_step(shape, state.X, state.M, radii)
    X_next = [(1.0 - config.beta) * x for x in X_moved]
    sample = draw_sample(state.rng)
    g_old = problem.stoch_grad(sample, state.X)
    g_new = problem.stoch_grad(sample, X_next)
    one_minus_alpha = 1.0 - config.alpha
    M_next = [
        one_minus_alpha * (m - go) + gn for m, go, gn in zip(state.M, g_old, g_new)
    ]
    state.X_prev = state.X
    state.X = X_next
    state.M = M_next
    state.last_sample = sample
    state.k += 1
    return state


_STEP_FUNCTIONS = {
    Method.GLUON: step_gluon,
    Method.GLUON_MVR1: step_gluon_mvr1,
    Method.GLUON_MVR1_DECREASING: step_gluon_mvr1_decreasing,
    Method.GLUON_MVR2: step_gluon_mvr2,
    Method.GLUON_MVR3: step_gluon_mvr3,
    Method.MUON_MVR: step_muon_mvr,
}


def step(state: OptimizerState, config: OptimizerConfig, problem: Problem) -> OptimizerState:
    """Advance one iteration of the configured method."""
    return _STEP_FUNCTIONS[config.method](state, config, problem)


def _max_l1t(constants: ProblemConstants | None, shape: ModelShape | None) -> float:
    if constants is None:
        return 0.0
    t = [s.t_i for s in shape.layers] if shape is not None else [1.0] * len(constants.L1_hat)
    return max((l1 * ti for l1, ti in zip(constants.L1_hat, t)), default=0.0)


def theorem_schedule(
    method: Method,
    K: int,
    constants: ProblemConstants | None = None,
    shape: ModelShape | None = None,
) -> OptimizerConfig:
    """Parameters (eta, beta/alpha, q) that realize each method's proven rate.

    With no estimated constants (or L1 = 0) the unconstrained choices apply:
    gluon uses eta = K^(-3/4), alpha = K^(-1/2); mvr1 and mvr3 use
    eta = alpha = K^(-2/3); mvr2 uses eta = q = K^(-2/3) with
    alpha >= K^(-1/3); muon_mvr uses alpha = beta = 2 ln(K) / K and
    eta = beta * D. When an L1 estimate is positive, eta is capped at
    min_i 1/(L1_i t_i) (mvr1/mvr3) or eta/alpha is capped at
    min_i 1/(5 L1_i t_i) (gluon/mvr2).
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    l1t = _max_l1t(constants, shape)
    note = "L1 cap active" if l1t > 0 else "L1 = 0 branch"
    eps = 1e-12

    if method is Method.GLUON:
        alpha = K ** (-0.5)
        eta = K ** (-0.75)
        if l1t > 0:
            eta = min(eta, alpha / (5.0 * l1t))
        return OptimizerConfig(method, eta=eta, beta=1.0 - alpha, alpha=alpha, K=K, schedule_note=note)

    if method is Method.GLUON_MVR1:
        alpha = K ** (-2.0 / 3.0)
        eta = K ** (-2.0 / 3.0)
        if l1t > 0:
            eta = min(eta, 1.0 / l1t)
        return OptimizerConfig(method, eta=eta, beta=1.0 - alpha, alpha=alpha, K=K, schedule_note=note)

    if method is Method.GLUON_MVR1_DECREASING:
        # beta_k and the radii are built into the step; eta/beta are unused.
        return OptimizerConfig(
            method, eta=1.0, beta=0.0, alpha=1.0, K=K, schedule_note="dynamic schedule"
        )

    if method is Method.GLUON_MVR2:
        eta = q = K ** (-2.0 / 3.0)
        alpha = K ** (-1.0 / 3.0)
        if l1t > 0:
            alpha = max(alpha, min(1.0, 5.0 * eta * l1t))
        return OptimizerConfig(
            method, eta=eta, beta=1.0 - alpha, alpha=alpha, q=q, K=K, schedule_note=note
        )

    if method is Method.GLUON_MVR3:
        alpha = K ** (-2.0 / 3.0)
        eta = K ** (-2.0 / 3.0)
        q = min(1.0, K ** (-1.0 / 3.0))
        if l1t > 0:
            eta = min(eta, 1.0 / l1t)
        return OptimizerConfig(
            method, eta=eta, beta=1.0 - alpha, alpha=alpha, q=q, K=K, schedule_note=note
        )

    if method is Method.MUON_MVR:
        beta = 2.0 * math.log(K) / K if K > 1 else eps
        beta = min(max(beta, eps), 1.0 - eps)
        D = 1.0
        if constants is not None and np.isfinite(constants.D) and constants.D > 0:
            D = constants.D
        return OptimizerConfig(
            method, eta=beta * D, beta=beta, alpha=beta, K=K, schedule_note=note
        )

    raise ValueError(f"unknown method: {method!r}")
