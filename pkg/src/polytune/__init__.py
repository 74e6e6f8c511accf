"""polytune: multi-criteria hyperparameter optimization.

Raw metrics from candidate configurations are normalized, weighted by the
entropy method, grouped into sub-indexes and aggregated into one integral
score in [0, 1]; grid, random, TPE and separable CMA-ES searchers then
maximize that single objective (or a dominant-group / single-metric
variant of it) over a typed parameter space.
"""

from .engine import load_study, resume_study, run_study
from .errors import (
    ConfigError,
    DegenerateStrategy,
    EmptyStudy,
    EvaluatorUnavailable,
    Exhausted,
    InsufficientData,
    InvalidResolution,
    InvalidValue,
    MissingRange,
    PartialExpertWeights,
    PolytuneError,
    RecoveredWithWarning,
    SchemaError,
    StoreError,
    UnsupportedDomain,
    UnsupportedVersion,
)
from .evaluation import (
    EvalRequest,
    EvalResult,
    ExternalEvaluator,
    evaluate_external,
    synthetic_eval,
    synthetic_evaluator,
    synthetic_metrics,
    synthetic_space,
)
from .optimizers import (
    ObservedTrial,
    OptimizerConfig,
    SepCmaConfig,
    TpeConfig,
    make_optimizer,
    tpe_split,
    tpe_suggest,
)
from .report import ReportSummary, build_report
from .scoring import (
    MetricSpec,
    NormalizedMatrix,
    ScoreBreakdown,
    Strategy,
    blend_weights,
    build_matrix,
    entropy_weights,
    equal_weights,
    full_entropy_weights,
    normalize_metric,
    objective_value,
    score_trial,
    strategy_subindex_weights,
    subindex_scores,
)
from .space import (
    ParamSpec,
    SearchSpace,
    categorical,
    continuous,
    from_unit_cube,
    grid_points,
    integer,
    log_continuous,
    log_integer,
    sample_uniform,
    to_unit_cube,
)
from .study import StudyConfig, StudyState, Trial, rescore_history, validate_config

__version__ = "0.1.0"
