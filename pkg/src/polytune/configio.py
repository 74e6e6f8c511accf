"""Human-authored input files: TOML study configs, metric specs, metric tables.

Study configs are TOML (see configs/synthetic.toml for the documented
schema, ``schema_version = 1``); machine artifacts inside a study directory
are JSON. Offline metric tables for the ``score`` command are CSV or JSON
lines keyed by metric name, with an optional ``id`` column.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, SchemaError
from .evaluation import (
    ExternalEvaluator,
    synthetic_evaluator,
    synthetic_metrics,
    synthetic_space,
)
from .optimizers import OptimizerConfig, SepCmaConfig, TpeConfig
from .scoring import MetricSpec, Strategy
from .space import ParamSpec, SearchSpace
from .study import SCHEMA_VERSION, StudyConfig

_ID_COLUMNS = ("id", "name", "model", "trial")


def _metric_from_toml(d: dict) -> MetricSpec:
    rng = d.get("range")
    return MetricSpec(
        name=d["name"],
        group=d.get("group", "default"),
        direction=d.get("direction", "benefit"),
        declared_range=tuple(rng) if rng else None,
        expert_weight=d.get("expert_weight"),
    )


def _param_from_toml(d: dict) -> ParamSpec:
    kind = d.get("type", d.get("kind"))
    if kind == "categorical":
        return ParamSpec(d["name"], "categorical", choices=tuple(d["choices"]))
    return ParamSpec(d["name"], kind, low=d["low"], high=d["high"])


def parse_strategy(text: str) -> Strategy:
    """Parse 'balanced', 'dominant:GROUP[:DELTA]' or 'single:METRIC'."""
    parts = text.split(":")
    kind = parts[0]
    if kind == "balanced":
        return Strategy("balanced")
    if kind == "dominant":
        if len(parts) < 2:
            raise ConfigError("dominant strategy needs a group: dominant:GROUP[:DELTA]")
        dominance = float(parts[2]) if len(parts) > 2 else 0.6
        return Strategy("dominant", dominant_group=parts[1], dominance=dominance)
    if kind == "single":
        if len(parts) < 2:
            raise ConfigError("single strategy needs a metric: single:METRIC")
        return Strategy("single", target_metric=parts[1])
    raise ConfigError(f"unknown strategy {text!r}")


def _strategy_from_toml(d: dict) -> Strategy:
    return Strategy(
        kind=d.get("kind", "balanced"),
        dominant_group=d.get("dominant_group"),
        dominance=d.get("dominance", 0.6),
        target_metric=d.get("target_metric"),
    )


def _optimizer_from_toml(d: dict) -> OptimizerConfig:
    tpe = TpeConfig(
        gamma=d.get("gamma", 0.25),
        n_startup=d.get("n_startup", 10),
        n_candidates=d.get("n_candidates", 24),
        prior_weight=d.get("prior_weight", 1.0),
    )
    sep = SepCmaConfig(lam=d.get("lambda"), sigma0=d.get("sigma0", 0.3))
    return OptimizerConfig(
        kind=d.get("kind", "random"),
        tpe=tpe,
        sepcmaes=sep,
        resolution=d.get("resolution"),
    )


def load_metric_specs(path) -> list[MetricSpec]:
    """Metric specs from a TOML file with [[metrics]] tables or a JSON list."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"metric spec file {p} not found")
    if p.suffix.lower() == ".json":
        items = json.loads(p.read_text(encoding="utf-8"))
        if isinstance(items, dict):
            items = items.get("metrics", [])
    else:
        with open(p, "rb") as fh:
            items = tomllib.load(fh).get("metrics", [])
    if not items:
        raise ConfigError(f"{p} declares no metrics")
    return [_metric_from_toml(dict(m)) for m in items]


def load_study_file(path):
    """Parse a study TOML file into (StudyConfig, evaluator, study_dir|None)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc

    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version {version} is not supported")

    eval_cfg = doc.get("evaluator", {})
    eval_kind = eval_cfg.get("kind", "synthetic")

    metrics = [_metric_from_toml(dict(m)) for m in doc.get("metrics", [])]
    params = [_param_from_toml(dict(pd)) for pd in doc.get("params", [])]
    if eval_kind == "synthetic":
        metrics = metrics or synthetic_metrics()
        space = SearchSpace(params) if params else synthetic_space()
    else:
        if not metrics:
            raise ConfigError("external evaluator configs must declare [[metrics]]")
        if not params:
            raise ConfigError("external evaluator configs must declare [[params]]")
        space = SearchSpace(params)

    study = doc.get("study", {})
    budget = study.get("budget", 20)
    config = StudyConfig(
        metrics=metrics,
        space=space,
        strategy=_strategy_from_toml(doc.get("strategy", {})),
        optimizer=_optimizer_from_toml(doc.get("optimizer", {})),
        budget=budget,
        parallelism=study.get("parallelism", 1),
        seed=study.get("seed", 0),
        normalization_mode=study.get("normalization", "declared"),
        weight_mode=study.get("weight_mode", "fixed"),
        n_calibration=study.get("n_calibration", min(20, budget)),
        expert_alpha=study.get("expert_alpha", 0.5),
    )

    if eval_kind == "synthetic":
        evaluator = synthetic_evaluator
    elif eval_kind == "external":
        command = eval_cfg.get("command")
        if not command:
            raise ConfigError("[evaluator] kind='external' needs a command array")
        evaluator = ExternalEvaluator(
            command,
            timeout=float(eval_cfg.get("timeout", 300.0)),
            expected_metrics=[m.name for m in metrics],
        )
    else:
        raise ConfigError(f"unknown evaluator kind {eval_kind!r}")

    return config, evaluator, study.get("dir")


def load_metric_table(path, specs: list[MetricSpec]) -> tuple[list[str], list[dict]]:
    """Load offline trial records: (row labels, metric dicts).

    CSV needs a header naming every declared metric; JSONL objects may nest
    metrics under "metrics" or hold them flat. Missing declared metrics
    raise SchemaError naming the column.
    """
    p = Path(path)
    if not p.is_file():
        raise SchemaError(f"metrics table {p} not found")
    names = [s.name for s in specs]
    labels: list[str] = []
    records: list[dict] = []

    if p.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        for i, line in enumerate(ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()):
            obj = json.loads(line)
            flat = obj.get("metrics", obj)
            labels.append(str(obj.get("id", i)))
            records.append({k: flat[k] for k in flat if isinstance(flat[k], (int, float))})
    else:
        with open(p, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            id_col = next((c for c in header if c.lower() in _ID_COLUMNS), None)
            for i, row in enumerate(reader):
                labels.append(str(row[id_col]) if id_col else str(i))
                rec = {}
                for k, v in row.items():
                    if k == id_col or v is None or v == "":
                        continue
                    try:
                        rec[k] = float(v)
                    except ValueError:
                        continue
                records.append(rec)

    if not records:
        raise SchemaError(f"{p} holds no data rows")
    for name in names:
        for i, rec in enumerate(records):
            if name not in rec or not math.isfinite(rec[name]):
                raise SchemaError(f"row {labels[i]!r} is missing metric column {name!r}")
    return labels, records
