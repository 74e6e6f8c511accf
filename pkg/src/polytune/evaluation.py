"""Raw-metric producers: external subprocess protocol and synthetic benchmark.

External evaluators receive one line of UTF-8 JSON on standard input,
``{"trial_id": n, "params": {...}}``, and must answer with one JSON object
``{"metrics": {...}}`` (optional "status" and "message") on standard
output, exiting 0 on success. Anything that is not a well-formed, complete,
finite response turns into a failed trial; only a spawn failure aborts the
study. One subprocess runs per trial.

The synthetic benchmark is a deterministic stand-in for a recommender with
an accuracy/diversity/resources trade-off; it gives every optimizer test a
shared, exactly reproducible ground truth.
"""

from __future__ import annotations

import json
import math
import subprocess
import time
from dataclasses import dataclass, field

from .errors import EvaluatorUnavailable, InvalidValue
from .scoring import MetricSpec
from .space import Params, SearchSpace, categorical, log_continuous, log_integer

OK = "ok"
FAILED = "failed"


@dataclass(frozen=True)
class EvalRequest:
    trial_id: int
    params: Params


@dataclass
class EvalResult:
    metrics: dict[str, float] = field(default_factory=dict)
    status: str = OK
    message: str = ""
    duration: float = 0.0


def request_line(request: EvalRequest) -> str:
    """Serialize a request as the single protocol line (newline included)."""
    return json.dumps({"trial_id": request.trial_id, "params": request.params}) + "\n"


def parse_response(text: str, expected_metrics) -> EvalResult:
    """Parse an evaluator response; any protocol violation yields status failed."""
    stripped = text.strip()
    try:
        payload = json.loads(stripped)
    except (json.JSONDecodeError, UnicodeDecodeError):
        lines = [ln for ln in stripped.splitlines() if ln.strip()]
        try:
            payload = json.loads(lines[-1]) if lines else None
        except json.JSONDecodeError:
            payload = None
        if payload is None:
            return EvalResult(status=FAILED, message=f"unparseable evaluator output: {stripped[:200]!r}")
    if not isinstance(payload, dict) or not isinstance(payload.get("metrics"), dict):
        return EvalResult(status=FAILED, message="evaluator output has no 'metrics' object")

    message = str(payload.get("message", ""))
    if payload.get("status", OK) != OK:
        return EvalResult(status=FAILED, message=message or "evaluator reported failure")

    metrics = {}
    for name, value in payload["metrics"].items():
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            return EvalResult(status=FAILED, message=f"metric {name!r} is not a finite number")
        metrics[str(name)] = float(value)
    missing = [m for m in expected_metrics if m not in metrics]
    if missing:
        return EvalResult(status=FAILED, message=f"evaluator omitted metrics {missing}")
    return EvalResult(metrics=metrics, message=message)


def evaluate_external(
    command,
    request: EvalRequest,
    timeout: float,
    expected_metrics,
    stderr_sink=None,
) -> EvalResult:
    """Run one evaluator subprocess for one trial.

    Nonzero exit, malformed output, missing metrics, non-finite numbers or a
    timeout produce a failed result; a spawn failure raises
    EvaluatorUnavailable and aborts the study. Standard error is forwarded
    to ``stderr_sink`` (a callable taking one string) when given.
    """
    if timeout <= 0:
        raise InvalidValue("timeout must be positive")
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except (OSError, ValueError) as exc:
        raise EvaluatorUnavailable(f"cannot spawn evaluator {command!r}: {exc}") from exc

    try:
        stdout, stderr = proc.communicate(request_line(request), timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        _, stderr = proc.communicate()
        duration = time.monotonic() - start
        if stderr and stderr_sink:
            stderr_sink(stderr)
        return EvalResult(
            status=FAILED,
            message=f"evaluator timed out after {timeout}s",
            duration=duration,
        )
    duration = time.monotonic() - start
    if stderr and stderr_sink:
        stderr_sink(stderr)

    if proc.returncode != 0:
        return EvalResult(
            status=FAILED,
            message=f"evaluator exited with code {proc.returncode}",
            duration=duration,
        )
    result = parse_response(stdout, expected_metrics)
    result.duration = duration
    return result


class ExternalEvaluator:
    """Callable adapter binding a command, timeout and declared metric names."""

    def __init__(self, command, timeout: float, expected_metrics, stderr_sink=None):
        self.command = list(command)
        self.timeout = timeout
        self.expected_metrics = list(expected_metrics)
        self.stderr_sink = stderr_sink

    def __call__(self, request: EvalRequest) -> EvalResult:
        return evaluate_external(
            self.command, request, self.timeout, self.expected_metrics, self.stderr_sink
        )


# --- synthetic recommender benchmark -------------------------------------

_K_LO, _K_HI = 8, 256
_LAM_LO, _LAM_HI = 1e-4, 1.0

#: Point counts per numeric axis of the reference grid (categoricals
#: enumerate, giving 12 x 12 x 2 = 288 points).
REFERENCE_RESOLUTION = {"k": 12, "lam": 12}


def synthetic_space() -> SearchSpace:
    return SearchSpace([
        log_integer("k", _K_LO, _K_HI),
        log_continuous("lam", _LAM_LO, _LAM_HI),
        categorical("algo", ["als", "bpr"]),
    ])


def synthetic_metrics() -> list[MetricSpec]:
    """Reference metric declarations; ranges contain all reachable values."""
    return [
        MetricSpec("precision", group="accuracy", direction="benefit", declared_range=(0.0, 0.45)),
        MetricSpec("ndcg", group="ranking", direction="benefit", declared_range=(0.0, 0.5)),
        MetricSpec("diversity", group="diversity", direction="benefit", declared_range=(0.0, 1.0)),
        MetricSpec("latency_ms", group="resources", direction="cost", declared_range=(0.0, 250.0)),
        MetricSpec("memory_mb", group="resources", direction="cost", declared_range=(0.0, 600.0)),
    ]


def synthetic_eval(params: Params) -> EvalResult:
    """Deterministic metrics with the classic accuracy/diversity tension.

    Larger neighborhoods (k) buy ranking accuracy at the cost of diversity,
    latency and memory; regularization (lam) has an interior sweet spot and
    the "bpr" algorithm carries a flat precision bonus.
    """
    synthetic_space().validate(params)
    k, lam, algo = params["k"], params["lam"], params["algo"]

    u = (math.log(k) - math.log(_K_LO)) / (math.log(_K_HI) - math.log(_K_LO))
    v = (math.log(lam) - math.log(_LAM_LO)) / (math.log(_LAM_HI) - math.log(_LAM_LO))
    bonus = 0.05 if algo == "bpr" else 0.0

    metrics = {
        "precision": 0.10 + 0.25 * math.sin(math.pi * u) * (1.0 - (v - 0.4) ** 2) + bonus,
        "ndcg": 0.15 + 0.30 * (1.0 - (u - 0.6) ** 2) * (1.0 - (v - 0.5) ** 2),
        "diversity": 0.90 - 0.60 * u,
        "latency_ms": 5.0 + 200.0 * u**2,
        "memory_mb": 50.0 + 500.0 * u,
    }
    return EvalResult(metrics=metrics)


def synthetic_evaluator(request: EvalRequest) -> EvalResult:
    return synthetic_eval(request.params)
