"""Study directory persistence.

Layout: ``config.json`` (full study config, schema-versioned),
``trials.jsonl`` (one JSON object per trial, appended and flushed as the
study runs), ``study.log`` (engine events and evaluator stderr), plus
``state.json``, an atomically replaced engine snapshot (random-generator
and optimizer state, the in-flight batch) that makes a resumed serial study
bit-identical to an uninterrupted one.

Loading replays config + trial lines. A corrupt trailing trial line is
repaired by truncating to the last valid line under a RecoveredWithWarning
warning; corruption anywhere else is an error.
"""

from __future__ import annotations

import datetime
import json
import os
import threading
import warnings
from pathlib import Path

from .errors import RecoveredWithWarning, StoreError, UnsupportedVersion
from .optimizers import OptimizerConfig, SepCmaConfig, TpeConfig
from .scoring import MetricSpec, ScoreBreakdown, Strategy
from .space import ParamSpec, SearchSpace
from .study import SCHEMA_VERSION, StudyConfig, Trial

CONFIG_FILE = "config.json"
TRIALS_FILE = "trials.jsonl"
STATE_FILE = "state.json"
LOG_FILE = "study.log"


# --- serialization ---------------------------------------------------------

def metric_to_dict(s: MetricSpec) -> dict:
    return {
        "name": s.name,
        "group": s.group,
        "direction": s.direction,
        "declared_range": list(s.declared_range) if s.declared_range else None,
        "expert_weight": s.expert_weight,
    }


def metric_from_dict(d: dict) -> MetricSpec:
    rng = d.get("declared_range")
    return MetricSpec(
        name=d["name"],
        group=d["group"],
        direction=d.get("direction", "benefit"),
        declared_range=tuple(rng) if rng else None,
        expert_weight=d.get("expert_weight"),
    )


def param_to_dict(p: ParamSpec) -> dict:
    return {
        "name": p.name,
        "kind": p.kind,
        "low": p.low,
        "high": p.high,
        "choices": list(p.choices) if p.choices else None,
    }


def param_from_dict(d: dict) -> ParamSpec:
    choices = d.get("choices")
    return ParamSpec(
        name=d["name"],
        kind=d["kind"],
        low=d.get("low"),
        high=d.get("high"),
        choices=tuple(choices) if choices else None,
    )


def strategy_to_dict(s: Strategy) -> dict:
    return {
        "kind": s.kind,
        "dominant_group": s.dominant_group,
        "dominance": s.dominance,
        "target_metric": s.target_metric,
    }


def strategy_from_dict(d: dict) -> Strategy:
    return Strategy(
        kind=d.get("kind", "balanced"),
        dominant_group=d.get("dominant_group"),
        dominance=d.get("dominance", 0.6),
        target_metric=d.get("target_metric"),
    )


def optimizer_to_dict(c: OptimizerConfig) -> dict:
    return {
        "kind": c.kind,
        "tpe": {
            "gamma": c.tpe.gamma,
            "n_startup": c.tpe.n_startup,
            "n_candidates": c.tpe.n_candidates,
            "prior_weight": c.tpe.prior_weight,
        },
        "sepcmaes": {"lam": c.sepcmaes.lam, "sigma0": c.sepcmaes.sigma0},
        "resolution": c.resolution,
    }


def optimizer_from_dict(d: dict) -> OptimizerConfig:
    tpe = d.get("tpe", {})
    sep = d.get("sepcmaes", {})
    return OptimizerConfig(
        kind=d.get("kind", "random"),
        tpe=TpeConfig(
            gamma=tpe.get("gamma", 0.25),
            n_startup=tpe.get("n_startup", 10),
            n_candidates=tpe.get("n_candidates", 24),
            prior_weight=tpe.get("prior_weight", 1.0),
        ),
        sepcmaes=SepCmaConfig(lam=sep.get("lam"), sigma0=sep.get("sigma0", 0.3)),
        resolution=d.get("resolution"),
    )


def config_to_dict(c: StudyConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "metrics": [metric_to_dict(s) for s in c.metrics],
        "params": [param_to_dict(p) for p in c.space],
        "strategy": strategy_to_dict(c.strategy),
        "optimizer": optimizer_to_dict(c.optimizer),
        "budget": c.budget,
        "parallelism": c.parallelism,
        "seed": c.seed,
        "normalization_mode": c.normalization_mode,
        "weight_mode": c.weight_mode,
        "n_calibration": c.n_calibration,
        "expert_alpha": c.expert_alpha,
    }


def config_from_dict(d: dict) -> StudyConfig:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"config schema {d.get('schema_version')!r} != {SCHEMA_VERSION}")
    return StudyConfig(
        metrics=[metric_from_dict(m) for m in d["metrics"]],
        space=SearchSpace([param_from_dict(p) for p in d["params"]]),
        strategy=strategy_from_dict(d.get("strategy", {})),
        optimizer=optimizer_from_dict(d.get("optimizer", {})),
        budget=d["budget"],
        parallelism=d.get("parallelism", 1),
        seed=d.get("seed", 0),
        normalization_mode=d.get("normalization_mode", "declared"),
        weight_mode=d.get("weight_mode", "fixed"),
        n_calibration=d.get("n_calibration", 20),
        expert_alpha=d.get("expert_alpha", 0.5),
    )


def breakdown_to_dict(b: ScoreBreakdown | None) -> dict | None:
    if b is None:
        return None
    return {
        "normalized": b.normalized,
        "metric_weights": b.metric_weights,
        "subindex_values": b.subindex_values,
        "subindex_weights": b.subindex_weights,
        "integral": b.integral,
        "clamped": b.clamped,
    }


def breakdown_from_dict(d: dict | None) -> ScoreBreakdown | None:
    if d is None:
        return None
    return ScoreBreakdown(
        normalized=d["normalized"],
        metric_weights=d["metric_weights"],
        subindex_values=d["subindex_values"],
        subindex_weights=d["subindex_weights"],
        integral=d["integral"],
        clamped=d.get("clamped", []),
    )


def trial_to_dict(t: Trial) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "trial_id": t.trial_id,
        "params": t.params,
        "metrics": t.metrics,
        "status": t.status,
        "message": t.message,
        "duration": t.duration,
        "breakdown": breakdown_to_dict(t.breakdown),
        "objective": t.objective,
    }


def trial_from_dict(d: dict) -> Trial:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"trial schema {d.get('schema_version')!r} != {SCHEMA_VERSION}")
    return Trial(
        trial_id=d["trial_id"],
        params=d["params"],
        metrics=d["metrics"],
        status=d["status"],
        message=d.get("message", ""),
        duration=d.get("duration", 0.0),
        breakdown=breakdown_from_dict(d.get("breakdown")),
        objective=d.get("objective"),
    )


# --- the store -------------------------------------------------------------

class StudyStore:
    """Owns one study directory; append-oriented, single-writer."""

    def __init__(self, path, create: bool = False):
        self.path = Path(path)
        if create:
            self.path.mkdir(parents=True, exist_ok=True)
        elif not self.path.is_dir():
            raise StoreError(f"study directory {self.path} does not exist")
        self._trials_fh = None
        self._log_fh = None
        self._log_lock = threading.Lock()

    # config

    def write_config(self, config: StudyConfig) -> None:
        tmp = self.path / (CONFIG_FILE + ".tmp")
        tmp.write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, self.path / CONFIG_FILE)

    def read_config(self) -> StudyConfig:
        p = self.path / CONFIG_FILE
        if not p.is_file():
            raise StoreError(f"{p} is missing")
        try:
            return config_from_dict(json.loads(p.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError) as exc:
            raise StoreError(f"cannot parse {p}: {exc}") from exc

    # trials

    def has_trials(self) -> bool:
        p = self.path / TRIALS_FILE
        return p.is_file() and p.stat().st_size > 0

    def append_trial(self, trial: Trial) -> None:
        if self._trials_fh is None:
            self._trials_fh = open(self.path / TRIALS_FILE, "a", encoding="utf-8")
        self._trials_fh.write(json.dumps(trial_to_dict(trial)) + "\n")
        self._trials_fh.flush()

    def rewrite_trials(self, trials: list[Trial]) -> None:
        """Atomically replace the whole trial log (used at weight freeze)."""
        if self._trials_fh is not None:
            self._trials_fh.close()
            self._trials_fh = None
        tmp = self.path / (TRIALS_FILE + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for t in trials:
                fh.write(json.dumps(trial_to_dict(t)) + "\n")
        os.replace(tmp, self.path / TRIALS_FILE)

    def read_trials(self) -> list[Trial]:
        """Replay the trial log; repair a corrupt trailing line by truncation."""
        p = self.path / TRIALS_FILE
        if not p.is_file():
            return []
        raw = p.read_text(encoding="utf-8")
        lines = raw.split("\n")
        trials: list[Trial] = []
        good_offset = 0
        offset = 0
        for i, line in enumerate(lines):
            span = len(line) + 1  # newline
            if not line.strip():
                offset += span
                continue
            try:
                trials.append(trial_from_dict(json.loads(line)))
            except UnsupportedVersion:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
                rest = "\n".join(lines[i + 1 :]).strip()
                if rest:
                    raise StoreError(f"corrupt trial line {i} (not trailing): {exc}") from exc
                warnings.warn(
                    f"dropping corrupt trailing trial line in {p}",
                    RecoveredWithWarning,
                    stacklevel=2,
                )
                with open(p, "a", encoding="utf-8") as fh:
                    fh.truncate(good_offset)
                break
            offset += span
            good_offset = offset
        for i, t in enumerate(trials):
            if t.trial_id != i:
                raise StoreError(f"trial ids are not contiguous at line {i}")
        return trials

    # engine snapshot

    def write_snapshot(self, snapshot: dict) -> None:
        snapshot = {"schema_version": SCHEMA_VERSION, **snapshot}
        tmp = self.path / (STATE_FILE + ".tmp")
        tmp.write_text(json.dumps(snapshot) + "\n", encoding="utf-8")
        os.replace(tmp, self.path / STATE_FILE)

    def read_snapshot(self) -> dict | None:
        p = self.path / STATE_FILE
        if not p.is_file():
            return None
        try:
            snap = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            warnings.warn(f"unreadable {p}; ignoring snapshot", RecoveredWithWarning, stacklevel=2)
            return None
        if snap.get("schema_version") != SCHEMA_VERSION:
            raise UnsupportedVersion(f"snapshot schema {snap.get('schema_version')!r}")
        return snap

    # log

    def log(self, message: str) -> None:
        with self._log_lock:
            if self._log_fh is None:
                self._log_fh = open(self.path / LOG_FILE, "a", encoding="utf-8")
            stamp = datetime.datetime.now().isoformat(timespec="seconds")
            for line in str(message).rstrip("\n").split("\n"):
                self._log_fh.write(f"{stamp} {line}\n")
            self._log_fh.flush()

    def close(self) -> None:
        for fh in (self._trials_fh, self._log_fh):
            if fh is not None:
                fh.close()
        self._trials_fh = None
        self._log_fh = None
