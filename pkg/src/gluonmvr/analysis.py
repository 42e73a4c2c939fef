"""Numeric verification of the summation lemmas and momentum-error recursions.

The lemma verifiers evaluate finite double sums directly and compare them to
their closed-form bounds; a false report would contradict a proved
inequality, i.e. flag an implementation bug. The recursion checker replays
an instrumented run and confirms that the recorded momentum error matches
its closed-form expansion in the per-step noise and drift terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracles import ParamVector, Problem, copy_blocks
from .optimizers import (
    Method,
    MVR_ESTIMATOR_METHODS,
    OptimizerConfig,
    OptimizerState,
    decreasing_beta,
    init_state,
    step,
)

HOLDS_TOL = 1e-12
RECURSION_TOL = 1e-9

# 12 + sqrt(2 e^3) log K, the shared bound of the two summation lemmas
_SUM_BOUND_C = math.sqrt(2.0 * math.e**3)


@dataclass(frozen=True)
class LemmaReport:
    lemma_id: str
    parameters: dict
    lhs: float
    rhs: float
    holds: bool
    margin: float


def _report(lemma_id: str, parameters: dict, lhs: float, rhs: float) -> LemmaReport:
    return LemmaReport(
        lemma_id=lemma_id,
        parameters=parameters,
        lhs=lhs,
        rhs=rhs,
        holds=lhs <= rhs + HOLDS_TOL,
        margin=rhs - lhs,
    )


def _alpha_k(k: int) -> float:
    return (k + 1) ** (-2.0 / 3.0)


def lemma_sum_alpha_lhs(K: int, compensated: bool = False) -> float:
    """sum_{k<K} (k+1)^(-2/3) sqrt(sum_{tau<=k} (prod_{s>tau}^{k} beta_s * alpha_tau)^2).

    The inner sum T_k satisfies T_k = beta_k^2 T_{k-1} + alpha_k^2 with
    T_0 = 1 (the tau = k term has an empty product), giving O(K) total work.
    """
    terms = []
    T = 1.0  # T_0: alpha_0 = 1, empty product = 1
    for k in range(K):
        if k > 0:
            b = decreasing_beta(k)
            T = b * b * T + _alpha_k(k) ** 2
        terms.append(_alpha_k(k) * math.sqrt(T))
    return math.fsum(terms) if compensated else sum(terms)


def lemma_sum_alpha_lhs_naive(K: int) -> float:
    """O(K^2) cross-check of :func:`lemma_sum_alpha_lhs`."""
    total = 0.0
    for k in range(K):
        inner = 0.0
        for tau in range(k + 1):
            prod = 1.0
            for s in range(tau + 1, k + 1):
                prod *= decreasing_beta(s)
            inner += (prod * _alpha_k(tau)) ** 2
        total += _alpha_k(k) * math.sqrt(inner)
    return total


def verify_lemma_sum_alpha(K: int) -> LemmaReport:
    """Geometric-weight sum bound with alpha_k = (k+1)^(-2/3)."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    lhs = lemma_sum_alpha_lhs(K)
    rhs = 12.0 + _SUM_BOUND_C * math.log(K)
    return _report("sum_alpha", {"K": K}, lhs, rhs)


def lemma_sum_t_lhs(K: int, t_i: float, compensated: bool = False) -> float:
    terms = []
    T = 0.0  # inner sum starts at tau = 1, so T_0 is empty
    for k in range(K):
        if k > 0:
            b = decreasing_beta(k)
            T = b * b * T + (t_i * _alpha_k(k)) ** 2
        terms.append(_alpha_k(k) * math.sqrt(T))
    return math.fsum(terms) if compensated else sum(terms)


def verify_lemma_sum_t(K: int, t_i: float) -> LemmaReport:
    """Radius-schedule sum bound with t_i_k = t_i (k+1)^(-2/3); lhs is linear in t_i."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if t_i <= 0:
        raise ValueError(f"t_i must be positive, got {t_i}")
    lhs = lemma_sum_t_lhs(K, t_i)
    rhs = t_i * (12.0 + _SUM_BOUND_C * math.log(K))
    return _report("sum_t", {"K": K, "t_i": t_i}, lhs, rhs)


def _geom_lhs(alpha: float, q: float, k: int, decay: bool) -> float:
    """sum_j a^2 b^(2k-2j) w_j (1 + 2 sum_{m=1}^{k-j} v^m) with w_j = (1-q)^j or 1.

    The inner geometric sums G_j run backwards via G_{j-1} = v (1 + G_j),
    one multiply-add per j.
    """
    beta = 1.0 - alpha
    v = (1.0 - q) / beta
    G = 0.0  # G_k: empty sum
    terms = np.empty(k)
    for j in range(k, 0, -1):
        w = (1.0 - q) ** j if decay else 1.0
        terms[j - 1] = alpha**2 * beta ** (2 * (k - j)) * w * (1.0 + 2.0 * G)
        G = v * (1.0 + G)
    return float(np.sum(terms))


def _geom_lhs_naive(alpha: float, q: float, k: int, decay: bool) -> float:
    beta = 1.0 - alpha
    v = (1.0 - q) / beta
    total = 0.0
    for j in range(1, k + 1):
        w = (1.0 - q) ** j if decay else 1.0
        total += alpha**2 * beta ** (2 * k - 2 * j) * w
        for s in range(j + 1, k + 1):
            total += 2.0 * alpha**2 * beta ** (2 * k - 2 * j) * v ** (s - j) * w
    return total


def verify_lemma_geom_v(alpha: float, q: float, k: int) -> LemmaReport:
    """Correlated geometric double sum against 2 alpha / ((2-alpha)(alpha + beta q))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    beta = 1.0 - alpha
    lhs = _geom_lhs(alpha, q, k, decay=False)
    rhs = 2.0 * alpha / ((2.0 - alpha) * (alpha + beta * q))
    return _report("geom_v", {"alpha": alpha, "q": q, "k": k}, lhs, rhs)


def verify_lemma_geom_decay(alpha: float, q: float, k: int) -> LemmaReport:
    """Decay-weighted double sum against 2 alpha (1-q)^(k+1) / (v + alpha - 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < q < alpha:
        raise ValueError(f"need 0 < q < alpha, got q={q}, alpha={alpha}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    beta = 1.0 - alpha
    v = (1.0 - q) / beta
    lhs = _geom_lhs(alpha, q, k, decay=True)
    rhs = 2.0 * alpha * (1.0 - q) ** (k + 1) / (v + alpha - 1.0)
    return _report("geom_decay", {"alpha": alpha, "q": q, "k": k}, lhs, rhs)


LEMMA_GRID_K = (1, 10, 100, 1000, 10000)
LEMMA_GRID_ALPHA_Q = tuple(round(0.05 * i, 2) for i in range(1, 20))  # 0.05 .. 0.95
LEMMA_GRID_SMALL_K = (1, 10, 100)


def lemma_grid_reports() -> list[LemmaReport]:
    """Every lemma verifier over its standard parameter grid.

    Covers K in {1, 10, 1e2, 1e3, 1e4} for the two summation lemmas, a
    19 x 19 (alpha, q) grid at k in {1, 10, 100} for the correlated
    geometric sum, and its q < alpha sub-grid for the decaying variant.
    """
    reports: list[LemmaReport] = []
    for K in LEMMA_GRID_K:
        reports.append(verify_lemma_sum_alpha(K))
        for t_i in (0.5, 1.0, 3.0):
            reports.append(verify_lemma_sum_t(K, t_i))
    for k in LEMMA_GRID_SMALL_K:
        for alpha in LEMMA_GRID_ALPHA_Q:
            for q in LEMMA_GRID_ALPHA_Q:
                reports.append(verify_lemma_geom_v(alpha, q, k))
                if q < alpha:
                    reports.append(verify_lemma_geom_decay(alpha, q, k))
    return reports


# -- momentum-error instrumentation -------------------------------------------


@dataclass
class MomentumErrorTrace:
    """Per-step momentum-error quantities from an instrumented run.

    ``mu[k-1]`` holds M^k - grad f(X^k) for k = 1..steps; ``gamma``, ``Z``,
    and ``S`` hold the estimator error, the Hessian-variance increment, and
    the gradient drift at the same steps. ``delta`` holds the martingale
    increments of the whole-space method, for which gamma/Z/S stay empty.
    """

    method: Method
    beta: float
    alpha: float
    q: float
    mu0: ParamVector
    mu: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    S: list = field(default_factory=list)
    delta: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.mu)


def start_trace(config: OptimizerConfig, problem: Problem, state: OptimizerState) -> MomentumErrorTrace:
    mu0 = [m - g for m, g in zip(state.M, problem.full_grad(state.X))]
    return MomentumErrorTrace(
        method=config.method, beta=config.beta, alpha=config.alpha, q=config.q, mu0=mu0
    )


def append_trace(
    trace: MomentumErrorTrace,
    problem: Problem,
    config: OptimizerConfig,
    x_before_prev: ParamVector,
    state: OptimizerState,
) -> None:
    """Record the error terms produced by the step that led to ``state``.

    ``x_before_prev`` is the iterate two steps back (the pre-step X_prev),
    needed to replay the sample at both evaluation points. The k = 0 step of
    the gluon family leaves the momentum at its init value and is skipped;
    record k starts at the first refreshed momentum.
    """
    sample = state.last_sample
    if config.method is not Method.MUON_MVR and state.k == 1:
        return
    if config.method is Method.MUON_MVR:
        F_new = problem.full_grad(state.X)
        F_old = problem.full_grad(state.X_prev)
        s_new = problem.stoch_grad(sample, state.X)
        s_old = problem.stoch_grad(sample, state.X_prev)
        trace.mu.append([m - f for m, f in zip(state.M, F_new)])
        trace.delta.append(
            [
                sn - fn + (1.0 - config.alpha) * (fo - so)
                for sn, fn, fo, so in zip(s_new, F_new, F_old, s_old)
            ]
        )
        return
    # gluon family: after the step, X_prev is the point the momentum was
    # refreshed at and x_before_prev is the point before it
    Xk, Xk_prev = state.X_prev, x_before_prev
    Fk = problem.full_grad(Xk)
    Fk_prev = problem.full_grad(Xk_prev)
    s_here = problem.stoch_grad(sample, Xk)
    s_prev = problem.stoch_grad(sample, Xk_prev)
    trace.mu.append([m - f for m, f in zip(state.M, Fk)])
    if config.method in MVR_ESTIMATOR_METHODS:
        trace.gamma.append([g - f for g, f in zip(state.g, Fk)])
    else:
        trace.gamma.append([s - f for s, f in zip(s_here, Fk)])
    trace.Z.append(
        [
            (sh - sp) - (fh - fp)
            for sh, sp, fh, fp in zip(s_here, s_prev, Fk, Fk_prev)
        ]
    )
    trace.S.append([fp - fh for fp, fh in zip(Fk_prev, Fk)])


def momentum_error_trace(
    config: OptimizerConfig,
    problem: Problem,
    X0: ParamVector,
    seed: int,
    steps: int,
) -> MomentumErrorTrace:
    """Record ``steps`` refreshed momenta along an instrumented run."""
    rng = np.random.default_rng(seed)
    state = init_state(config, problem.shape, X0, problem, rng)
    trace = start_trace(config, problem, state)
    # the gluon family consumes one step before the first momentum refresh
    n_calls = steps if config.method is Method.MUON_MVR else steps + 1
    for _ in range(n_calls):
        x_before_prev = state.X_prev
        state = step(state, config, problem)
        append_trace(trace, problem, config, x_before_prev, state)
    return trace


def _prod_beta(a: int, b: int) -> float:
    """prod_{s=a}^{b} (1 - (s+1)^(-2/3)); empty when a > b."""
    prod = 1.0
    for s in range(a, b + 1):
        prod *= decreasing_beta(s)
    return prod


def _expand(trace: MomentumErrorTrace, k: int) -> ParamVector:
    """Closed-form mu^k from mu^0 and the recorded per-step terms."""
    m = trace.method
    beta, alpha = trace.beta, trace.alpha
    if m is Method.MUON_MVR:
        out = [(1.0 - alpha) ** k * b for b in trace.mu0]
        for i in range(1, k + 1):
            w = (1.0 - alpha) ** (k - i)
            out = [o + w * d for o, d in zip(out, trace.delta[i - 1])]
        return out
    if m is Method.GLUON_MVR1_DECREASING:
        out = [_prod_beta(1, k) * b for b in trace.mu0]  # tau = 0 term, gamma^0 = mu^0
        for tau in range(1, k + 1):
            wg = _prod_beta(tau + 1, k) * _alpha_k(tau)
            wz = _prod_beta(tau, k)
            out = [
                o + wg * g + wz * z
                for o, g, z in zip(out, trace.gamma[tau - 1], trace.Z[tau - 1])
            ]
        return out
    drift = trace.Z if m in (Method.GLUON_MVR1, Method.GLUON_MVR3) else trace.S
    out = [beta**k * b for b in trace.mu0]
    for tau in range(1, k + 1):
        wg = beta ** (k - tau) * alpha
        wd = beta ** (k + 1 - tau)
        out = [
            o + wg * g + wd * d
            for o, g, d in zip(out, trace.gamma[tau - 1], drift[tau - 1])
        ]
    return out


def recursion_discrepancy(trace: MomentumErrorTrace) -> float:
    """Max absolute gap between recorded mu^k and its closed-form expansion."""
    worst = 0.0
    for k in range(1, trace.steps + 1):
        expanded = _expand(trace, k)
        for e, r in zip(expanded, trace.mu[k - 1]):
            worst = max(worst, float(np.max(np.abs(e - r))))
    return worst


def check_momentum_recursion(
    trace: MomentumErrorTrace, method: Method, config: OptimizerConfig
) -> bool:
    """True iff the recorded momentum errors match the closed form within 1e-9."""
    if trace.method is not method or config.method is not method:
        raise ValueError(
            f"trace records {trace.method.value}, cannot check against {method.value}"
        )
    return recursion_discrepancy(trace) <= RECURSION_TOL
