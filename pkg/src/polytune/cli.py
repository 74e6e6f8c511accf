"""Command-line front end: run studies, score offline tables, render reports.

Exit codes: 0 success, 2 configuration or input-schema problem, 3 evaluator
unavailable, 4 io / unusable study directory. Set POLYTUNE_LOG=debug (or
info, warning) to raise console log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .configio import load_metric_specs, load_metric_table, load_study_file, parse_strategy
from .engine import load_study, resume_study, run_study
from .errors import (
    ConfigError,
    EmptyStudy,
    EvaluatorUnavailable,
    InvalidValue,
    MissingRange,
    PolytuneError,
    SchemaError,
    StoreError,
    UnsupportedVersion,
)
from .report import build_report
from .scoring import (
    Strategy,
    blend_weights,
    build_matrix,
    equal_weights,
    full_entropy_weights,
    group_order,
    objective_value,
    score_trial,
)
from .study import Trial, expert_weight_map

logger = logging.getLogger("polytune")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_IO = 4


def _setup_logging() -> None:
    level = os.environ.get("POLYTUNE_LOG", "warning").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


# --- run -------------------------------------------------------------------

def cmd_run(args) -> int:
    config, evaluator, config_dir = load_study_file(args.config)
    if args.budget is not None:
        config.budget = args.budget
        if config.n_calibration > config.budget:
            logger.info("clamping n_calibration to the overridden budget %d", config.budget)
            config.n_calibration = config.budget
    if args.seed is not None:
        config.seed = args.seed
    if args.parallelism is not None:
        config.parallelism = args.parallelism
    if args.strategy:
        config.strategy = parse_strategy(args.strategy)
    study_dir = args.study_dir or config_dir
    logger.info("running study: budget=%d seed=%d dir=%s", config.budget, config.seed, study_dir)

    def progress(trial, best):
        print(f"trial {trial.trial_id:4d}  objective={trial.objective:.6f}  best={best:.6f}")

    if args.resume:
        if not study_dir:
            raise ConfigError("--resume needs a study directory")
        state = resume_study(study_dir, evaluator, budget=args.budget, on_trial=progress)
    else:
        state = run_study(config, evaluator, study_dir=study_dir, on_trial=progress)

    best = state.best_trial()
    if best is not None:
        print(f"best trial {best.trial_id}  objective={best.objective:.6f}  params={best.params}")
    return EXIT_OK


# --- score -----------------------------------------------------------------

def _score_rows(labels, records, specs, mode, alpha, strategy):
    trials = [Trial(trial_id=i, params={}, metrics=rec) for i, rec in enumerate(records)]
    matrix = build_matrix(trials, specs, mode)
    if matrix.values.shape[0] >= 2:
        weights = full_entropy_weights(matrix, specs)
    else:
        weights = equal_weights(specs)
    expert = expert_weight_map(specs)
    if expert:
        weights = blend_weights(weights, expert, specs, alpha)

    rows = []
    for t in trials:
        bd = score_trial(matrix.row(t.trial_id), weights, specs, strategy, matrix.clamped_metrics(t.trial_id))
        rows.append((labels[t.trial_id], bd, objective_value(bd, strategy)))
    order = sorted(range(len(rows)), key=lambda i: -rows[i][2])
    ranks = {idx: r + 1 for r, idx in enumerate(order)}
    return [(label, bd, obj, ranks[i]) for i, (label, bd, obj) in enumerate(rows)]


def _score_table(scored, specs, fmt):
    groups = group_order(specs)
    headers = (
        ["id"]
        + [f"n_{s.name}" for s in specs]
        + [f"w_{s.name}" for s in specs]
        + [f"s_{g}" for g in groups]
        + ["integral", "objective", "rank"]
    )
    rows = []
    for label, bd, obj, rank in scored:
        rows.append(
            [label]
            + [fmt(bd.normalized[s.name]) for s in specs]
            + [fmt(bd.metric_weights[s.name]) for s in specs]
            + [fmt(bd.subindex_values[g]) for g in groups]
            + [fmt(bd.integral), fmt(obj), str(rank)]
        )
    return headers, rows


def cmd_score(args) -> int:
    specs = load_metric_specs(args.spec)
    labels, records = load_metric_table(args.metrics, specs)
    strategy = parse_strategy(args.strategy) if args.strategy else Strategy("balanced")
    scored = _score_rows(labels, records, specs, args.mode, args.alpha, strategy)

    headers, display_rows = _score_table(scored, specs, lambda x: f"{x:.6f}")
    print(_render_table(headers, display_rows))
    if args.csv:
        # full-precision cells so parse(render(x)) round-trips exactly
        headers, csv_rows = _score_table(scored, specs, _fmt)
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(headers) + "\n")
            for row in csv_rows:
                fh.write(",".join(row) + "\n")
        print(f"wrote {args.csv}")
    return EXIT_OK


# --- report ------------------------------------------------------------------

def _report_csv(summary, specs) -> str:
    groups = group_order(specs)
    best_labels = [b.label for b in summary.strategies]
    headers = (
        ["trial_id"]
        + [f"n_{s.name}" for s in specs]
        + [f"w_{s.name}" for s in specs]
        + [f"s_{g}" for g in groups]
        + ["integral", "pareto", "clamps"]
        + [f"best_{label}" for label in best_labels]
    )
    best_ids = {b.label: b.trial_id for b in summary.strategies}
    lines = [",".join(headers)]
    for row in summary.rows:
        cells = (
            [str(row["trial_id"])]
            + [_fmt(row["normalized"][s.name]) for s in specs]
            + [_fmt(row["metric_weights"][s.name]) for s in specs]
            + [_fmt(row["subindex_values"][g]) for g in groups]
            + [_fmt(row["integral"]), str(int(row["pareto"])), str(row["clamps"])]
            + [str(int(best_ids[label] == row["trial_id"])) for label in best_labels]
        )
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    state = load_study(args.study_dir)
    summary = build_report(state)
    specs = state.config.metrics

    if args.format == "csv":
        sys.stdout.write(_report_csv(summary, specs))
        return EXIT_OK

    print(f"study: {args.study_dir}")
    print(f"trials: {len(state.trials)} total, {len(state.completed())} completed")
    print()
    print("best trial per strategy (same final weights):")
    rows = [
        [b.label, str(b.trial_id), f"{b.objective:.6f}"]
        for b in summary.strategies
    ]
    print(_render_table(["strategy", "best_trial", "objective"], rows))
    print()
    print(f"sub-index Pareto set: {summary.pareto_ids}")
    clamps = {k: v for k, v in summary.clamp_counts.items() if v}
    print(f"clamp events by metric: {clamps if clamps else 'none'}")
    return EXIT_OK


# --- entry -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polytune",
        description="Multi-criteria hyperparameter optimization over a composite integral score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a study from a TOML config")
    p_run.add_argument("--config", required=True, help="study config file")
    p_run.add_argument("--budget", type=int, default=None, help="override trial budget")
    p_run.add_argument("--seed", type=int, default=None, help="override random seed")
    p_run.add_argument("--parallelism", type=int, default=None, help="override evaluation parallelism")
    p_run.add_argument("--strategy", default=None, help="balanced | dominant:GROUP[:DELTA] | single:METRIC")
    p_run.add_argument("--study-dir", default=None, help="directory for persisted study state")
    p_run.add_argument("--resume", action="store_true", help="continue a persisted study")
    p_run.set_defaults(func=cmd_run)

    p_score = sub.add_parser("score", help="score an offline metrics table")
    p_score.add_argument("--metrics", required=True, help="csv or jsonl table of raw metrics")
    p_score.add_argument("--spec", required=True, help="metric spec file (toml or json)")
    p_score.add_argument("--mode", choices=["declared", "observed"], default="observed")
    p_score.add_argument("--alpha", type=float, default=0.5, help="expert blend weight")
    p_score.add_argument("--strategy", default=None, help="ranking strategy (default balanced)")
    p_score.add_argument("--csv", default=None, help="also write the table to this csv file")
    p_score.set_defaults(func=cmd_score)

    p_report = sub.add_parser("report", help="summarize a persisted study")
    p_report.add_argument("study_dir", help="study directory")
    p_report.add_argument("--format", choices=["text", "csv"], default="text")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, InvalidValue, MissingRange, UnsupportedVersion) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluatorUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except (StoreError, EmptyStudy, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PolytuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
