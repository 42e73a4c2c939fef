"""Experiment runner: seeded runs, stationarity metric, and rate fitting.

A run records one row per iterate k = 0..K-1 with the objective value, the
weighted dual-norm stationarity metric computed from the exact full
gradient, and its running minimum. Rate fits regress the log of the
seed-averaged min-metric on log K across budgets; the convergence-rate
separations show up as fitted slopes.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .norms import dual_norm, norm
from .oracles import ModelShape, ParamVector, Problem
from .optimizers import (
    Method,
    OptimizerConfig,
    decreasing_radii,
    init_state,
    step,
)

FEASIBILITY_SLACK = 1e-9


def stationarity_metric(problem: Problem, shape: ModelShape, X: ParamVector) -> float:
    """sum_i t_i * ||grad_i f(X)||_(i)* from the exact full gradient."""
    shape.validate(X)
    grads = problem.full_grad(X)
    return sum(
        s.t_i * dual_norm(s.norm, g) for s, g in zip(shape.layers, grads)
    )


@dataclass(frozen=True)
class IterationRow:
    k: int
    f_value: float
    metric: float
    min_metric: float
    layer_dual_norms: tuple[float, ...]


@dataclass
class RunRecord:
    config: OptimizerConfig
    seed: int
    rows: list[IterationRow]
    wall_time: float
    delta0: float
    f_min_known: float
    aborted: bool = False
    max_feasibility_violation: float = 0.0
    trace: analysis.MomentumErrorTrace | None = None

    @property
    def final_min_metric(self) -> float:
        return self.rows[-1].min_metric

    @property
    def final_f(self) -> float:
        return self.rows[-1].f_value


def _step_radii(config: OptimizerConfig, shape: ModelShape, k: int) -> list[float]:
    if config.method is Method.MUON_MVR:
        return [config.eta] * shape.p
    if config.method is Method.GLUON_MVR1_DECREASING:
        return decreasing_radii(shape, k)
    return [s.t_i * config.eta for s in shape.layers]


def _feasibility_violation(config, shape, X_old, X_new, radii) -> float:
    """Positive part of ||X_i' - X_i|| - radius_i, maxed over layers.

    For the weight-decay method the moved point before decay is recovered by
    dividing out (1 - beta).
    """
    worst = 0.0
    undecay = 1.0 / (1.0 - config.beta) if config.method is Method.MUON_MVR else 1.0
    for spec, xo, xn, r in zip(shape.layers, X_old, X_new, radii):
        moved = xn * undecay if undecay != 1.0 else xn
        worst = max(worst, norm(spec.norm, moved - xo) - r)
    return max(worst, 0.0)


def run_experiment(
    config: OptimizerConfig,
    problem: Problem,
    seed: int,
    instrument: bool = False,
    check_feasibility: bool = True,
) -> RunRecord:
    """Run K iterations, recording one metric row per iterate.

    Deterministic given (config, seed). A non-finite iterate aborts the run
    with a diagnostic NaN row. With ``instrument`` the momentum-error trace
    is captured alongside.
    """
    shape = problem.shape
    rng = np.random.default_rng(seed)
    X0 = problem.initial_point(rng)
    f_min = problem.reference_minimum()
    t0 = time.perf_counter()
    state = init_state(config, shape, X0, problem, rng)
    trace = analysis.start_trace(config, problem, state) if instrument else None
    rows: list[IterationRow] = []
    min_metric = np.inf
    worst_violation = 0.0
    aborted = False
    delta0 = problem.value(X0) - f_min

    for k in range(config.K):
        grads = problem.full_grad(state.X)
        duals = tuple(dual_norm(s.norm, g) for s, g in zip(shape.layers, grads))
        metric = sum(s.t_i * d for s, d in zip(shape.layers, duals))
        min_metric = min(min_metric, metric)
        rows.append(
            IterationRow(k, problem.value(state.X), metric, min_metric, duals)
        )
        radii = _step_radii(config, shape, state.k)
        X_old = state.X
        x_before_prev = state.X_prev
        state = step(state, config, problem)
        if not all(np.all(np.isfinite(b)) for b in state.X):
            rows.append(
                IterationRow(k + 1, np.nan, np.nan, min_metric, (np.nan,) * shape.p)
            )
            aborted = True
            break
        if check_feasibility:
            worst_violation = max(
                worst_violation,
                _feasibility_violation(config, shape, X_old, state.X, radii),
            )
        if trace is not None:
            analysis.append_trace(trace, problem, config, x_before_prev, state)

    return RunRecord(
        config=config,
        seed=seed,
        rows=rows,
        wall_time=time.perf_counter() - t0,
        delta0=delta0,
        f_min_known=f_min,
        aborted=aborted,
        max_feasibility_violation=worst_violation,
        trace=trace,
    )


@dataclass(frozen=True)
class RateFit:
    budgets: tuple[int, ...]
    metric_at_K: tuple[float, ...]
    slope: float
    stderr: float


def fit_rate(records_by_K: dict[int, list[RunRecord]]) -> RateFit:
    """Least-squares slope of log seed-averaged min-metric on log K.

    Requires at least 3 distinct budgets with at least 5 seeds each; the
    standard error is the usual OLS slope error.
    """
    budgets = sorted(records_by_K)
    if len(budgets) < 3:
        raise ValueError(f"need at least 3 budgets, got {len(budgets)}")
    for K, recs in records_by_K.items():
        if len(recs) < 5:
            raise ValueError(f"need at least 5 seeds per budget, got {len(recs)} at K={K}")
    means = np.array(
        [np.mean([r.final_min_metric for r in records_by_K[K]]) for K in budgets]
    )
    x = np.log(np.asarray(budgets, dtype=float))
    y = np.log(means)
    n = len(budgets)
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    if n > 2:
        stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))
    else:
        stderr = 0.0
    return RateFit(
        budgets=tuple(budgets),
        metric_at_K=tuple(float(m) for m in means),
        slope=slope,
        stderr=stderr,
    )


@dataclass(frozen=True)
class CellSummary:
    config: OptimizerConfig
    seed_count: int
    mean_min_metric: float
    std_min_metric: float
    mean_final_f: float
    std_final_f: float
    aborted: int


@dataclass
class SweepResult:
    records: list[RunRecord]
    cells: list[CellSummary]


def sweep(
    configs: list[OptimizerConfig],
    problem: Problem,
    seeds: list[int],
    parallelism: int = 4,
    check_feasibility: bool = True,
) -> SweepResult:
    """Run the config x seed grid concurrently; results are order-stable.

    Each run owns its rng and state, and the problem is immutable, so cells
    execute independently; aggregation happens after all futures resolve in
    grid order.
    """
    if not configs:
        raise ValueError("sweep needs a nonempty config grid")
    problem.reference_minimum()  # warm the cache before going parallel
    jobs = [(ci, s) for ci in range(len(configs)) for s in seeds]
    results: dict[tuple[int, int], RunRecord] = {}
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        futures = {
            (ci, s): pool.submit(
                run_experiment, configs[ci], problem, s, False, check_feasibility
            )
            for ci, s in jobs
        }
        for key, fut in futures.items():
            results[key] = fut.result()
    records = [results[(ci, s)] for ci in range(len(configs)) for s in seeds]
    cells = []
    for ci, cfg in enumerate(configs):
        recs = [results[(ci, s)] for s in seeds]
        mins = np.array([r.final_min_metric for r in recs])
        fins = np.array([r.final_f for r in recs])
        cells.append(
            CellSummary(
                config=cfg,
                seed_count=len(seeds),
                mean_min_metric=float(np.mean(mins)),
                std_min_metric=float(np.std(mins)),
                mean_final_f=float(np.mean(fins)),
                std_final_f=float(np.std(fins)),
                aborted=sum(r.aborted for r in recs),
            )
        )
    return SweepResult(records=records, cells=cells)
