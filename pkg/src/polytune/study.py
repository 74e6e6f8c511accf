"""Study definition and the weight/normalization scoring lifecycle.

A study couples a metric set, a search space, a strategy, an optimizer and
a budget. Scoring runs in one of two weight regimes: ``fixed`` scores the
first ``n_calibration`` trials with equal weights, then freezes entropy
weights (blended with any expert weights) computed over that calibration
prefix and rescores history once; ``adaptive`` recomputes weights over all
completed trials before every tell. Normalization is either ``declared``
(fixed ranges from the metric specs) or ``adaptive`` (observed per-column
ranges, recomputed as trials arrive).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, EmptyStudy
from .optimizers import ObservedTrial, OptimizerConfig
from .scoring import (
    MetricSpec,
    NormalizedMatrix,
    ScoreBreakdown,
    Strategy,
    blend_weights,
    build_matrix,
    equal_weights,
    full_entropy_weights,
    group_order,
    objective_value,
    score_trial,
    strategy_subindex_weights,
)
from .space import CATEGORICAL, Params, SearchSpace

SCHEMA_VERSION = 1

OK = "ok"
FAILED = "failed"


@dataclass
class Trial:
    """One evaluated configuration with its raw metrics and score."""

    trial_id: int
    params: Params
    metrics: dict[str, float] = field(default_factory=dict)
    status: str = OK
    message: str = ""
    duration: float = 0.0
    breakdown: ScoreBreakdown | None = None
    objective: float | None = None


@dataclass
class StudyConfig:
    metrics: list[MetricSpec]
    space: SearchSpace
    strategy: Strategy = field(default_factory=Strategy)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    budget: int = 20
    parallelism: int = 1
    seed: int = 0
    normalization_mode: str = "declared"  # "declared" | "adaptive"
    weight_mode: str = "fixed"  # "fixed" | "adaptive"
    n_calibration: int = 20
    expert_alpha: float = 0.5


@dataclass
class StudyState:
    """Config plus the append-only trial history and resume bookkeeping."""

    config: StudyConfig
    trials: list[Trial] = field(default_factory=list)
    frozen_weights: dict[str, float] | None = None
    pending: list[Params] = field(default_factory=list)
    batch_start: int | None = None
    persisted: int = 0  # trials already written to the store

    def completed(self) -> list[Trial]:
        return [t for t in self.trials if t.status == OK]

    def best_trial(self) -> Trial | None:
        done = [t for t in self.trials if t.objective is not None]
        return max(done, key=lambda t: t.objective) if done else None


def expert_weight_map(specs: list[MetricSpec]) -> dict[str, float]:
    return {s.name: s.expert_weight for s in specs if s.expert_weight is not None}


def validate_config(config: StudyConfig) -> None:
    """Reject invalid configurations before any trial runs."""
    if not config.metrics:
        raise ConfigError("a study needs at least one metric")
    names = [s.name for s in config.metrics]
    if len(set(names)) != len(names):
        raise ConfigError("metric names must be unique")
    if len(config.space) == 0:
        raise ConfigError("the search space is empty")
    if config.budget < 1:
        raise ConfigError("budget must be >= 1")
    if config.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if config.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if config.normalization_mode not in ("declared", "adaptive"):
        raise ConfigError(f"unknown normalization mode {config.normalization_mode!r}")
    if config.weight_mode not in ("fixed", "adaptive"):
        raise ConfigError(f"unknown weight mode {config.weight_mode!r}")
    if not 0.0 <= config.expert_alpha <= 1.0:
        raise ConfigError("expert_alpha must lie in [0, 1]")

    if config.normalization_mode == "declared":
        missing = [s.name for s in config.metrics if s.declared_range is None]
        if missing:
            raise ConfigError(f"declared normalization needs ranges for {missing}")
    if config.weight_mode == "fixed":
        if not 1 <= config.n_calibration <= config.budget:
            raise ConfigError("n_calibration must lie in [1, budget]")

    groups = group_order(config.metrics)
    strat = config.strategy
    if strat.kind == "dominant":
        if strat.dominant_group not in groups:
            raise ConfigError(f"dominant group {strat.dominant_group!r} not declared")
        strategy_subindex_weights(strat, groups)  # validates dominance range
    if strat.kind == "single" and strat.target_metric not in names:
        raise ConfigError(f"target metric {strat.target_metric!r} not declared")

    # expert weights must cover whole groups
    expert = expert_weight_map(config.metrics)
    by_group: dict[str, list[str]] = {}
    for s in config.metrics:
        by_group.setdefault(s.group, []).append(s.name)
    for g, members in by_group.items():
        given = [n for n in members if n in expert]
        if given and len(given) != len(members):
            raise ConfigError(f"expert weights cover group {g!r} only partially")

    try:
        config.optimizer.validate()
    except ConfigError:
        raise
    if config.optimizer.kind == "grid":
        res = config.optimizer.resolution or {}
        for p in config.space:
            if p.kind != CATEGORICAL and p.name not in res:
                raise ConfigError(f"grid optimizer needs a resolution for {p.name!r}")
    if config.optimizer.kind == "sepcmaes" and not config.space.numeric_only:
        raise ConfigError("sep-CMA-ES supports numeric dimensions only")


def history_view(state: StudyState) -> list[ObservedTrial]:
    """History handed to optimizers; failed trials carry objective 0."""
    out = []
    for t in state.trials:
        obj = 0.0 if t.status != OK or t.objective is None else t.objective
        out.append(ObservedTrial(t.trial_id, t.params, obj))
    return out


def _entropy_or_equal(matrix: NormalizedMatrix, specs: list[MetricSpec]) -> dict[str, float]:
    if matrix.values.shape[0] >= 2:
        return full_entropy_weights(matrix, specs)
    return equal_weights(specs)


def _matrix_mode(config: StudyConfig) -> str:
    return "declared" if config.normalization_mode == "declared" else "observed"


def calibration_weights(state: StudyState) -> dict[str, float]:
    """Weights frozen at the end of calibration, derived only from the prefix.

    Entropy weights over the completed trials among the first n_calibration
    trials (equal weights when fewer than two completed), blended with any
    expert weights. Deterministic given the trial history, so a reloaded
    study reconstructs the identical frozen vector.
    """
    config = state.config
    specs = config.metrics
    prefix = [t for t in state.trials[: config.n_calibration] if t.status == OK]
    if len(prefix) >= 2:
        matrix = build_matrix(prefix, specs, _matrix_mode(config))
        weights = full_entropy_weights(matrix, specs)
    else:
        weights = equal_weights(specs)
    expert = expert_weight_map(specs)
    if expert:
        weights = blend_weights(weights, expert, specs, config.expert_alpha)
    return weights


def current_weights(state: StudyState, matrix: NormalizedMatrix) -> dict[str, float]:
    """Metric weights in force for the state's current trial count."""
    config = state.config
    specs = config.metrics
    if config.weight_mode == "adaptive":
        weights = _entropy_or_equal(matrix, specs)
        expert = expert_weight_map(specs)
        if expert:
            weights = blend_weights(weights, expert, specs, config.expert_alpha)
        return weights
    # fixed-after-calibration
    if len(state.trials) >= config.n_calibration:
        if state.frozen_weights is None:
            state.frozen_weights = calibration_weights(state)
        return state.frozen_weights
    return equal_weights(specs)


def rescore_history(state: StudyState) -> NormalizedMatrix:
    """Recompute every completed trial's breakdown and objective in place.

    Builds the normalization matrix for the configured mode, resolves the
    weight regime (possibly freezing calibration weights), and rewrites each
    trial's ScoreBreakdown and objective. Failed trials get objective 0 and
    no breakdown. Deterministic given the state.
    """
    completed = state.completed()
    if not completed:
        raise EmptyStudy("cannot rescore a study with no completed trials")
    config = state.config
    specs = config.metrics
    matrix = build_matrix(completed, specs, _matrix_mode(config))
    weights = current_weights(state, matrix)
    for t in state.trials:
        if t.status == OK:
            row = matrix.row(t.trial_id)
            clamped = matrix.clamped_metrics(t.trial_id)
            t.breakdown = score_trial(row, weights, specs, config.strategy, clamped)
            t.objective = objective_value(t.breakdown, config.strategy)
        else:
            t.breakdown = None
            t.objective = 0.0
    return matrix
