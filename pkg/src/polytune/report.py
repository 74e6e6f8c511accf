"""Study reporting: strategy comparison, sub-index Pareto set, clamp counts.

The report rescores one trial history under every strategy variant over the
same final metric weights, reproducing the balanced / dominant / single
comparison on the user's own study. Pareto flags are diagnostic only: a
trial is flagged when no other completed trial weakly dominates its
sub-index vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyStudy
from .scoring import Strategy, build_matrix, group_order, objective_value, score_trial
from .study import StudyState, current_weights


@dataclass
class StrategyBest:
    label: str
    strategy: Strategy
    trial_id: int
    objective: float


@dataclass
class ReportSummary:
    strategies: list[StrategyBest]
    pareto_ids: list[int]
    clamp_counts: dict[str, int]
    rows: list[dict] = field(default_factory=list)  # per-trial report rows


def strategy_variants(state: StudyState) -> list[tuple[str, Strategy]]:
    """Balanced, one dominant variant per group, one single variant per metric."""
    groups = group_order(state.config.metrics)
    out: list[tuple[str, Strategy]] = [("balanced", Strategy("balanced"))]
    if len(groups) > 1:
        for g in groups:
            out.append((f"dominant:{g}", Strategy("dominant", dominant_group=g)))
    for s in state.config.metrics:
        out.append((f"single:{s.name}", Strategy("single", target_metric=s.name)))
    return out


def build_report(state: StudyState) -> ReportSummary:
    """Assemble the full summary for a finished (or loaded) study."""
    completed = state.completed()
    if not completed:
        raise EmptyStudy("nothing to report: no completed trials")
    config = state.config
    specs = config.metrics
    groups = group_order(specs)

    matrix = build_matrix(completed, specs, "declared" if config.normalization_mode == "declared" else "observed")
    weights = current_weights(state, matrix)

    breakdowns = {}
    for t in completed:
        breakdowns[t.trial_id] = score_trial(
            matrix.row(t.trial_id), weights, specs, config.strategy, matrix.clamped_metrics(t.trial_id)
        )

    bests: list[StrategyBest] = []
    for label, strat in strategy_variants(state):
        best_id, best_obj = None, None
        for t in completed:
            bd = score_trial(
                breakdowns[t.trial_id].normalized, weights, specs, strat,
                breakdowns[t.trial_id].clamped,
            )
            obj = objective_value(bd, strat)
            if best_obj is None or obj > best_obj:
                best_id, best_obj = t.trial_id, obj
        bests.append(StrategyBest(label, strat, best_id, best_obj))

    # sub-index Pareto flags (maximize every group)
    vectors = {
        t.trial_id: [breakdowns[t.trial_id].subindex_values[g] for g in groups]
        for t in completed
    }
    pareto: list[int] = []
    for tid, vec in vectors.items():
        dominated = any(
            other != tid
            and all(o >= v for o, v in zip(vectors[other], vec))
            and any(o > v for o, v in zip(vectors[other], vec))
            for other in vectors
        )
        if not dominated:
            pareto.append(tid)

    clamp_counts = {name: 0 for name in matrix.cols}
    for t in completed:
        for name in breakdowns[t.trial_id].clamped:
            clamp_counts[name] += 1

    rows = []
    pareto_set = set(pareto)
    for t in completed:
        bd = breakdowns[t.trial_id]
        rows.append(
            {
                "trial_id": t.trial_id,
                "status": t.status,
                "params": dict(t.params),
                "normalized": bd.normalized,
                "metric_weights": bd.metric_weights,
                "subindex_values": bd.subindex_values,
                "integral": bd.integral,
                "pareto": t.trial_id in pareto_set,
                "clamps": len(bd.clamped),
            }
        )
    return ReportSummary(strategies=bests, pareto_ids=sorted(pareto), clamp_counts=clamp_counts, rows=rows)
