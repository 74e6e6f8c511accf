"""Evaluation tests: synthetic benchmark formulas and the subprocess protocol."""

import json
import sys

import numpy as np
import pytest

from polytune.errors import EvaluatorUnavailable, InvalidValue
from polytune.evaluation import (
    REFERENCE_RESOLUTION,
    EvalRequest,
    evaluate_external,
    parse_response,
    request_line,
    synthetic_eval,
    synthetic_metrics,
    synthetic_space,
)
from polytune.scoring import Strategy, full_entropy_weights, build_matrix, objective_value, score_trial
from polytune.space import grid_points, sample_uniform
from polytune.study import Trial

# frozen from exhaustive enumeration of the 12x12x2 reference grid through the
# full scoring pipeline (balanced strategy, declared reference ranges,
# entropy weights over the complete matrix); recomputed in test_acceptance
GOLDEN_GRID_BEST_INDEX = 83
GOLDEN_GRID_BEST_PARAMS = {"k": 21, "algo": "bpr"}
GOLDEN_GRID_BEST_LAM = 0.006579332246575685
GOLDEN_GRID_BEST_SCORE = 0.7733959890719425


def _eval_cmd(body: str) -> list[str]:
    return [sys.executable, "-c", body]


ECHO_EVALUATOR = _eval_cmd(
    "import sys, json\n"
    "req = json.loads(sys.stdin.readline())\n"
    "print(json.dumps({'metrics': {'a': 1.0, 'b': req['params']['x']}}))\n"
)


class TestSynthetic:
    def test_lower_boundary_k8(self):
        r = synthetic_eval({"k": 8, "lam": 0.01, "algo": "als"})
        assert r.status == "ok"
        assert r.metrics["diversity"] == pytest.approx(0.90)
        assert r.metrics["latency_ms"] == pytest.approx(5.0)
        assert r.metrics["memory_mb"] == pytest.approx(50.0)
        assert r.metrics["precision"] == pytest.approx(0.10)  # sin(0) term vanishes

    def test_upper_boundary_k256(self):
        r = synthetic_eval({"k": 256, "lam": 0.5, "algo": "als"})
        assert r.metrics["diversity"] == pytest.approx(0.30)
        assert r.metrics["latency_ms"] == pytest.approx(205.0)
        assert r.metrics["memory_mb"] == pytest.approx(550.0)

    def test_bpr_bonus(self):
        als = synthetic_eval({"k": 64, "lam": 0.01, "algo": "als"}).metrics
        bpr = synthetic_eval({"k": 64, "lam": 0.01, "algo": "bpr"}).metrics
        assert bpr["precision"] - als["precision"] == pytest.approx(0.05)
        assert bpr["ndcg"] == als["ndcg"]

    def test_pure_function(self):
        p = {"k": 57, "lam": 0.003, "algo": "bpr"}
        a = synthetic_eval(p).metrics
        b = synthetic_eval(p).metrics
        assert a == b

    def test_out_of_domain_rejected(self):
        with pytest.raises(InvalidValue):
            synthetic_eval({"k": 4, "lam": 0.01, "algo": "als"})
        with pytest.raises(InvalidValue):
            synthetic_eval({"k": 8, "lam": 0.01, "algo": "nope"})

    def test_metrics_inside_reference_ranges(self):
        space = synthetic_space()
        ranges = {s.name: s.declared_range for s in synthetic_metrics()}
        rng = np.random.default_rng(99)
        for _ in range(10_000):
            m = synthetic_eval(sample_uniform(space, rng)).metrics
            for name, (lo, hi) in ranges.items():
                assert lo <= m[name] <= hi

    def test_reference_grid_is_288(self):
        pts = grid_points(synthetic_space(), REFERENCE_RESOLUTION)
        assert len(pts) == 288

    def test_golden_grid_optimum(self):
        specs = synthetic_metrics()
        pts = grid_points(synthetic_space(), REFERENCE_RESOLUTION)
        trials = [Trial(i, p, synthetic_eval(p).metrics) for i, p in enumerate(pts)]
        matrix = build_matrix(trials, specs, "declared")
        weights = full_entropy_weights(matrix, specs)
        strat = Strategy("balanced")
        objs = [
            objective_value(score_trial(matrix.row(t.trial_id), weights, specs, strat), strat)
            for t in trials
        ]
        best = int(np.argmax(objs))
        assert best == GOLDEN_GRID_BEST_INDEX
        assert objs[best] == pytest.approx(GOLDEN_GRID_BEST_SCORE, abs=1e-12)
        assert pts[best]["k"] == GOLDEN_GRID_BEST_PARAMS["k"]
        assert pts[best]["algo"] == GOLDEN_GRID_BEST_PARAMS["algo"]
        assert pts[best]["lam"] == pytest.approx(GOLDEN_GRID_BEST_LAM, rel=1e-12)


class TestProtocol:
    def test_request_line_schema(self):
        line = request_line(EvalRequest(7, {"x": 1.5, "algo": "als"}))
        assert line.endswith("\n") and "\n" not in line[:-1]
        obj = json.loads(line)
        assert obj == {"trial_id": 7, "params": {"x": 1.5, "algo": "als"}}

    def test_roundtrip_random_pairs(self):
        rng = np.random.default_rng(1)
        for i in range(200):
            params = {
                "a": float(rng.uniform(-10, 10)),
                "b": int(rng.integers(0, 100)),
                "c": str(rng.choice(["p", "q"])),
            }
            req = EvalRequest(i, params)
            assert json.loads(request_line(req)) == {"trial_id": i, "params": params}

            metrics = {f"m{j}": float(rng.uniform(-5, 5)) for j in range(3)}
            payload = json.dumps({"metrics": metrics, "status": "ok", "message": "hi"})
            result = parse_response(payload, list(metrics))
            assert result.status == "ok"
            assert result.metrics == metrics
            assert result.message == "hi"

    def test_parse_rejects_missing_metric(self):
        result = parse_response(json.dumps({"metrics": {"a": 1.0}}), ["a", "b"])
        assert result.status == "failed" and "b" in result.message

    def test_parse_rejects_non_finite(self):
        result = parse_response('{"metrics": {"a": 1e999}}', ["a"])
        assert result.status == "failed"

    def test_parse_tolerates_leading_noise(self):
        text = "progress 1\nprogress 2\n" + json.dumps({"metrics": {"a": 2.0}})
        result = parse_response(text, ["a"])
        assert result.status == "ok" and result.metrics == {"a": 2.0}


class TestEvaluateExternal:
    def test_echo_stub(self):
        result = evaluate_external(
            ECHO_EVALUATOR, EvalRequest(3, {"x": 0.25}), timeout=30, expected_metrics=["a", "b"]
        )
        assert result.status == "ok"
        assert result.metrics == {"a": 1.0, "b": 0.25}
        assert result.duration > 0

    def test_malformed_output(self):
        cmd = _eval_cmd("print('not json')")
        result = evaluate_external(cmd, EvalRequest(0, {}), 30, ["a"])
        assert result.status == "failed"
        assert "unparseable" in result.message or "metrics" in result.message

    def test_timeout(self):
        cmd = _eval_cmd("import time; time.sleep(60)")
        result = evaluate_external(cmd, EvalRequest(0, {}), 0.8, ["a"])
        assert result.status == "failed"
        assert "timed out" in result.message
        assert result.duration == pytest.approx(0.8, abs=0.6)

    def test_nonzero_exit(self):
        cmd = _eval_cmd("import sys; sys.exit(3)")
        result = evaluate_external(cmd, EvalRequest(0, {}), 30, ["a"])
        assert result.status == "failed" and "code 3" in result.message

    def test_reported_failure_status(self):
        cmd = _eval_cmd('print(\'{"metrics": {}, "status": "failed", "message": "oom"}\')')
        result = evaluate_external(cmd, EvalRequest(0, {}), 30, ["a"])
        assert result.status == "failed" and "oom" in result.message

    def test_stderr_captured(self):
        cmd = _eval_cmd(
            "import sys, json\n"
            "sys.stderr.write('warn: slow path\\n')\n"
            "print(json.dumps({'metrics': {'a': 1.0}}))\n"
        )
        seen = []
        result = evaluate_external(cmd, EvalRequest(0, {}), 30, ["a"], stderr_sink=seen.append)
        assert result.status == "ok"
        assert any("slow path" in s for s in seen)

    def test_spawn_failure_aborts(self):
        with pytest.raises(EvaluatorUnavailable):
            evaluate_external(["/nonexistent/evaluator-binary"], EvalRequest(0, {}), 30, ["a"])
