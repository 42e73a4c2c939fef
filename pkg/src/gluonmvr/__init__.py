"""LMO-based non-Euclidean optimizers with momentum variance reduction."""

from .analysis import (
    LemmaReport,
    MomentumErrorTrace,
    check_momentum_recursion,
    lemma_grid_reports,
    momentum_error_trace,
    verify_lemma_geom_decay,
    verify_lemma_geom_v,
    verify_lemma_sum_alpha,
    verify_lemma_sum_t,
)
from .harness import (
    RateFit,
    RunRecord,
    fit_rate,
    run_experiment,
    stationarity_metric,
    sweep,
)
from .norms import (
    NormKind,
    dual_norm,
    lmo_direction,
    norm,
    polar_factor_newton_schulz,
    polar_factor_svd,
    rho_bound,
)
from .oracles import (
    LayerSpec,
    LogisticRegression,
    MatrixFactorization,
    ModelShape,
    NoisyQuadratic,
    Problem,
    ProblemConstants,
    Sample,
    TwoLayerMLP,
    draw_sample,
    estimate_constants,
    full_grad,
    stoch_grad,
    value,
)
from .optimizers import (
    Method,
    OptimizerConfig,
    OptimizerState,
    init_state,
    lmo_step,
    step,
    step_gluon,
    step_gluon_mvr1,
    step_gluon_mvr1_decreasing,
    step_gluon_mvr2,
    step_gluon_mvr3,
    step_muon_mvr,
    theorem_schedule,
)

__version__ = "0.1.0"
