"""Composite scoring: normalization, entropy weighting, sub-indexes, objective.

Raw metrics are rescaled to [0, 1] with min-max normalization (inverted for
cost metrics), weighted within each metric group by the entropy method,
aggregated into per-group sub-indexes, and finally combined into a single
integral score in [0, 1]. Weighted arithmetic means are used at both
aggregation levels, which keeps the score monotone in every metric and
bounded. All functions here are pure; nothing in this module holds state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateStrategy,
    EmptyStudy,
    InsufficientData,
    InvalidValue,
    MissingRange,
    PartialExpertWeights,
    SchemaError,
)

BENEFIT = "benefit"
COST = "cost"

#: Normalized value assigned when a range is degenerate (hi == lo). The metric
#: carries no information, 0.5 biases neither direction, and a constant column
#: subsequently receives zero entropy weight.
DEGENERATE_VALUE = 0.5


@dataclass(frozen=True)
class MetricSpec:
    """Declares one raw metric: its group, direction and optional range/weight."""

    name: str
    group: str
    direction: str = BENEFIT
    declared_range: tuple[float, float] | None = None
    expert_weight: float | None = None

    def __post_init__(self):
        if self.direction not in (BENEFIT, COST):
            raise InvalidValue(f"metric {self.name!r}: direction must be 'benefit' or 'cost'")
        if self.declared_range is not None:
            lo, hi = self.declared_range
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InvalidValue(f"metric {self.name!r}: declared range must be finite")
            if not lo < hi:
                raise InvalidValue(f"metric {self.name!r}: declared range needs lo < hi")
        if self.expert_weight is not None:
            if not math.isfinite(self.expert_weight) or self.expert_weight < 0:
                raise InvalidValue(f"metric {self.name!r}: expert weight must be finite and >= 0")


@dataclass(frozen=True)
class Strategy:
    """Objective strategy: balanced integral, dominant sub-index, or single metric."""

    kind: str = "balanced"
    dominant_group: str | None = None
    dominance: float = 0.6
    target_metric: str | None = None

    def __post_init__(self):
        if self.kind not in ("balanced", "dominant", "single"):
            raise InvalidValue(f"unknown strategy kind {self.kind!r}")
        if self.kind == "dominant" and not self.dominant_group:
            raise InvalidValue("dominant strategy needs a dominant_group")
        if self.kind == "single" and not self.target_metric:
            raise InvalidValue("single strategy needs a target_metric")


@dataclass
class NormalizedMatrix:
    """Trials x metrics matrix of normalized values in [0, 1]."""

    rows: list[int]
    cols: list[str]
    values: np.ndarray
    range_source: str  # "declared" | "observed"
    clamped: np.ndarray = field(default=None)  # bool mask, same shape as values

    def row(self, trial_id: int) -> dict[str, float]:
        i = self.rows.index(trial_id)
        return {c: float(self.values[i, j]) for j, c in enumerate(self.cols)}

    def clamped_metrics(self, trial_id: int) -> list[str]:
        i = self.rows.index(trial_id)
        return [c for j, c in enumerate(self.cols) if self.clamped[i, j]]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.cols.index(name)]


@dataclass
class ScoreBreakdown:
    """Full scoring record for one trial, kept for reporting regardless of strategy."""

    normalized: dict[str, float]
    metric_weights: dict[str, float]
    subindex_values: dict[str, float]
    subindex_weights: dict[str, float]
    integral: float
    clamped: list[str] = field(default_factory=list)


def group_order(specs: list[MetricSpec]) -> list[str]:
    """Groups in first-appearance order; every group listed has >= 1 metric."""
    seen: list[str] = []
    for s in specs:
        if s.group not in seen:
            seen.append(s.group)
    return seen


def group_members(specs: list[MetricSpec]) -> dict[str, list[str]]:
    members: dict[str, list[str]] = {}
    for s in specs:
        members.setdefault(s.group, []).append(s.name)
    return members


def normalize_metric(value: float, lo: float, hi: float, direction: str) -> float:
    """Min-max normalize ``value`` into [0, 1]; cost metrics are inverted.

    Values outside [lo, hi] clamp to the boundary. A degenerate range
    (hi == lo) returns 0.5.
    """
    for x in (value, lo, hi):
        if not math.isfinite(x):
            raise InvalidValue(f"non-finite input to normalize_metric: {x!r}")
    if lo > hi:
        raise InvalidValue(f"normalize_metric needs lo <= hi, got ({lo}, {hi})")
    if hi == lo:
        return DEGENERATE_VALUE
    if direction == BENEFIT:
        raw = (value - lo) / (hi - lo)
    elif direction == COST:
        raw = (hi - value) / (hi - lo)
    else:
        raise InvalidValue(f"unknown direction {direction!r}")
    return min(1.0, max(0.0, raw))


def build_matrix(trials, specs: list[MetricSpec], mode: str) -> NormalizedMatrix:
    """Normalize completed trials into a matrix.

    ``mode`` is "declared" (use each spec's declared range, error if absent)
    or "observed" (per-column min/max over the supplied completed trials).
    Failed trials are excluded. Raises EmptyStudy when nothing completed.
    """
    if mode not in ("declared", "observed"):
        raise InvalidValue(f"unknown normalization mode {mode!r}")
    completed = [t for t in trials if getattr(t, "status", "ok") == "ok"]
    if not completed:
        raise EmptyStudy("no completed trials to normalize")

    cols = [s.name for s in specs]
    raw = np.empty((len(completed), len(cols)))
    for i, t in enumerate(completed):
        for j, s in enumerate(specs):
            if s.name not in t.metrics:
                raise SchemaError(f"trial {t.trial_id} is missing metric {s.name!r}")
            v = float(t.metrics[s.name])
            if not math.isfinite(v):
                raise InvalidValue(f"trial {t.trial_id}: metric {s.name!r} is not finite")
            raw[i, j] = v

    values = np.empty_like(raw)
    clamped = np.zeros(raw.shape, dtype=bool)
    for j, s in enumerate(specs):
        if mode == "declared":
            if s.declared_range is None:
                raise MissingRange(f"metric {s.name!r} has no declared range")
            lo, hi = s.declared_range
        else:
            lo, hi = float(raw[:, j].min()), float(raw[:, j].max())
        for i in range(raw.shape[0]):
            values[i, j] = normalize_metric(raw[i, j], lo, hi, s.direction)
        if hi > lo:
            clamped[:, j] = (raw[:, j] < lo) | (raw[:, j] > hi)

    return NormalizedMatrix(
        rows=[t.trial_id for t in completed],
        cols=cols,
        values=values,
        range_source=mode,
        clamped=clamped,
    )


def entropy_weights(matrix: NormalizedMatrix, specs: list[MetricSpec], group: str) -> dict[str, float]:
    """Entropy-method weights for the metrics of one group.

    For column j: p_ij = x_ij / sum_i(x_ij), e_j = -(1/ln m) * sum_i(p_ij ln p_ij)
    with 0*ln(0) = 0, divergence d_j = 1 - e_j, weight w_j = d_j / sum(d_j).
    Columns with no variation (including all-zero columns) get d_j = 0. When
    every d_j in the group is zero, or the group has a single column, the
    weights are equal within the group.
    """
    m = matrix.values.shape[0]
    if m < 2:
        raise InsufficientData("entropy weights need at least 2 trials")
    names = [s.name for s in specs if s.group == group]
    if not names:
        raise InvalidValue(f"group {group!r} has no metrics")

    divergence = {}
    for name in names:
        col = matrix.column(name)
        total = float(col.sum())
        if total <= 0.0:
            divergence[name] = 0.0
            continue
        p = col / total
        nz = p[p > 0]
        e = -float(np.sum(nz * np.log(nz))) / math.log(m)
        divergence[name] = max(0.0, 1.0 - e)

    d_sum = sum(divergence.values())
    if d_sum <= 0.0 or len(names) == 1:
        return {name: 1.0 / len(names) for name in names}
    return {name: divergence[name] / d_sum for name in names}


def equal_weights(specs: list[MetricSpec]) -> dict[str, float]:
    """Equal weights within each group (the calibration / fallback regime)."""
    members = group_members(specs)
    out: dict[str, float] = {}
    for names in members.values():
        for n in names:
            out[n] = 1.0 / len(names)
    return out


def full_entropy_weights(matrix: NormalizedMatrix, specs: list[MetricSpec]) -> dict[str, float]:
    """Entropy weights for every group, assembled into one weight vector."""
    out: dict[str, float] = {}
    for g in group_order(specs):
        out.update(entropy_weights(matrix, specs, g))
    return out


def blend_weights(
    entropy: dict[str, float],
    expert: dict[str, float],
    specs: list[MetricSpec],
    alpha: float = 0.5,
) -> dict[str, float]:
    """Blend entropy weights with expert weights: w = alpha*expert + (1-alpha)*entropy.

    Expert weights must cover whole groups; within a covered group they are
    first normalized to sum to 1. Groups without expert weights keep their
    entropy weights unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidValue(f"alpha must lie in [0, 1], got {alpha}")
    for name, w in expert.items():
        if not math.isfinite(w) or w < 0:
            raise InvalidValue(f"expert weight for {name!r} must be finite and >= 0")

    members = group_members(specs)
    out = dict(entropy)
    for g, names in members.items():
        given = [n for n in names if n in expert]
        if not given:
            continue
        if len(given) != len(names):
            missing = sorted(set(names) - set(given))
            raise PartialExpertWeights(f"group {g!r}: expert weights missing for {missing}")
        total = sum(expert[n] for n in names)
        if total <= 0:
            raise InvalidValue(f"group {g!r}: expert weights sum to zero")
        for n in names:
            out[n] = alpha * (expert[n] / total) + (1.0 - alpha) * entropy[n]
    return out


def subindex_scores(
    normalized_row: dict[str, float],
    weights: dict[str, float],
    specs: list[MetricSpec],
) -> dict[str, float]:
    """Weighted mean of each group's normalized values; one entry per group."""
    out: dict[str, float] = {}
    for g, names in group_members(specs).items():
        out[g] = sum(weights[n] * normalized_row[n] for n in names)
    return out


def strategy_subindex_weights(strategy: Strategy, groups: list[str]) -> dict[str, float]:
    """Sub-index weights implied by the strategy over the non-empty groups.

    Balanced gives 1/G each. Dominant gives the dominant group its dominance
    delta and splits 1-delta evenly over the rest, so every group keeps
    strictly positive weight. The single-metric strategy has no sub-index
    weighting of its own; its breakdown is reported with balanced weights.
    """
    g_count = len(groups)
    if g_count == 0:
        raise DegenerateStrategy("no metric groups")
    if strategy.kind in ("balanced", "single"):
        return {g: 1.0 / g_count for g in groups}
    # dominant
    if g_count == 1:
        raise DegenerateStrategy("dominant strategy needs at least 2 groups")
    if strategy.dominant_group not in groups:
        raise DegenerateStrategy(f"dominant group {strategy.dominant_group!r} not among {groups}")
    delta = strategy.dominance
    if not (1.0 / g_count < delta < 1.0):
        raise DegenerateStrategy(
            f"dominance {delta} outside (1/{g_count}, 1) for {g_count} groups"
        )
    rest = (1.0 - delta) / (g_count - 1)
    return {g: (delta if g == strategy.dominant_group else rest) for g in groups}


def score_trial(
    normalized_row: dict[str, float],
    metric_weights: dict[str, float],
    specs: list[MetricSpec],
    strategy: Strategy,
    clamped: list[str] | None = None,
) -> ScoreBreakdown:
    """Assemble the full breakdown for one trial under the given weights."""
    groups = group_order(specs)
    sub_vals = subindex_scores(normalized_row, metric_weights, specs)
    sub_weights = strategy_subindex_weights(strategy, groups)
    integral = sum(sub_weights[g] * sub_vals[g] for g in groups)
    return ScoreBreakdown(
        normalized=dict(normalized_row),
        metric_weights={s.name: metric_weights[s.name] for s in specs},
        subindex_values=sub_vals,
        subindex_weights=sub_weights,
        integral=integral,
        clamped=list(clamped or []),
    )


def objective_value(breakdown: ScoreBreakdown, strategy: Strategy) -> float:
    """Scalar objective for one trial; higher is always better.

    Balanced and dominant strategies maximize the integral value; the single
    strategy maximizes the (direction-adjusted) normalized target metric.
    """
    if strategy.kind == "single":
        if strategy.target_metric not in breakdown.normalized:
            raise DegenerateStrategy(f"target metric {strategy.target_metric!r} not scored")
        return breakdown.normalized[strategy.target_metric]
    return breakdown.integral
