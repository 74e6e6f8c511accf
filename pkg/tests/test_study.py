"""Study-engine tests: the optimize loop, weight lifecycle, persistence, resume."""

import json

import pytest

from polytune.engine import load_study, resume_study, run_study
from polytune.errors import (
    ConfigError,
    EmptyStudy,
    EvaluatorUnavailable,
    RecoveredWithWarning,
)
from polytune.evaluation import EvalResult, synthetic_evaluator, synthetic_metrics, synthetic_space
from polytune.optimizers import OptimizerConfig
from polytune.scoring import MetricSpec, Strategy, equal_weights, normalize_metric
from polytune.space import SearchSpace, categorical, continuous
from polytune.study import StudyConfig, StudyState, rescore_history

TINY_SPACE = SearchSpace([continuous("x", 0.0, 1.0), categorical("c", ["a", "b"])])
TINY_METRICS = [
    MetricSpec("quality", group="accuracy", direction="benefit", declared_range=(0.0, 1.0)),
    MetricSpec("cost", group="resources", direction="cost", declared_range=(0.0, 10.0)),
]


def tiny_eval(request):
    x = request.params["x"]
    bump = 0.1 if request.params["c"] == "a" else 0.0
    return EvalResult(metrics={"quality": min(1.0, x + bump), "cost": 10.0 * x * x})


def tiny_config(**overrides):
    defaults = dict(
        metrics=TINY_METRICS,
        space=TINY_SPACE,
        optimizer=OptimizerConfig(kind="random"),
        budget=12,
        seed=5,
        n_calibration=6,
    )
    defaults.update(overrides)
    return StudyConfig(**defaults)


class FlakyEvaluator:
    """Fails every third trial with a failed result (not an abort)."""

    def __call__(self, request):
        if request.trial_id % 3 == 2:
            return EvalResult(status="failed", message="synthetic crash")
        return tiny_eval(request)


class KillAfter:
    """Raises after the given number of successful evaluations."""

    def __init__(self, limit, inner):
        self.limit = limit
        self.inner = inner
        self.calls = 0

    def __call__(self, request):
        self.calls += 1
        if self.calls > self.limit:
            raise KeyboardInterrupt("simulated kill")
        return self.inner(request)


class TestRunStudy:
    def test_grid_budget_and_termination(self):
        config = tiny_config(
            optimizer=OptimizerConfig(kind="grid", resolution={"x": 3}), budget=6
        )
        state = run_study(config, tiny_eval)
        assert len(state.trials) == 6
        assert [t.trial_id for t in state.trials] == list(range(6))

    def test_grid_exhaustion_is_normal(self):
        config = tiny_config(
            optimizer=OptimizerConfig(kind="grid", resolution={"x": 3}), budget=50
        )
        state = run_study(config, tiny_eval)
        assert len(state.trials) == 6  # 3 x 2 grid, exhausted before budget

    def test_serial_determinism(self):
        a = run_study(tiny_config(), tiny_eval)
        b = run_study(tiny_config(), tiny_eval)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]
        assert [t.objective for t in a.trials] == [t.objective for t in b.trials]

    def test_invalid_config_before_any_trial(self):
        calls = []

        def spy(request):
            calls.append(request)
            return tiny_eval(request)

        with pytest.raises(ConfigError):
            run_study(tiny_config(budget=0), spy)
        with pytest.raises(ConfigError):
            run_study(tiny_config(n_calibration=99), spy)
        with pytest.raises(ConfigError):
            run_study(
                tiny_config(strategy=Strategy("single", target_metric="nope")), spy
            )
        with pytest.raises(ConfigError):
            run_study(tiny_config(seed=-1), spy)
        assert calls == []

    def test_declared_mode_requires_ranges(self):
        metrics = [MetricSpec("quality", group="g")]
        with pytest.raises(ConfigError):
            run_study(tiny_config(metrics=metrics), tiny_eval)

    def test_failed_trials_scored_zero_and_counted(self):
        state = run_study(tiny_config(budget=9), FlakyEvaluator())
        assert len(state.trials) == 9
        failed = [t for t in state.trials if t.status == "failed"]
        assert len(failed) == 3
        assert all(t.objective == 0.0 and t.breakdown is None for t in failed)

    def test_failed_trials_never_in_matrix(self):
        state = run_study(tiny_config(budget=9), FlakyEvaluator())
        matrix = rescore_history(state)
        assert set(matrix.rows) == {t.trial_id for t in state.trials if t.status == "ok"}

    def test_cma_partial_final_generation(self):
        config = tiny_config(
            space=SearchSpace([continuous("x", 0, 1), continuous("y", 0, 1)]),
            optimizer=OptimizerConfig(kind="sepcmaes"),
            budget=10,  # lambda = 6: one full generation plus a truncated one
        )

        def xy_eval(request):
            return EvalResult(metrics={"quality": request.params["x"], "cost": request.params["y"]})

        state = run_study(config, xy_eval)
        assert len(state.trials) == 10

    def test_objectives_told_match_rescore(self, monkeypatch):
        import polytune.engine as engine_mod

        told = []
        real_make = engine_mod.make_optimizer

        def spying_make(config, space, seed):
            opt = real_make(config, space, seed)
            real_tell = opt.tell

            def tell(batch):
                told.extend((b.trial_id, b.objective) for b in batch)
                return real_tell(batch)

            opt.tell = tell
            return opt

        monkeypatch.setattr(engine_mod, "make_optimizer", spying_make)
        config = tiny_config(budget=12, n_calibration=6)
        state = run_study(config, tiny_eval)

        specs = config.metrics
        eq = equal_weights(specs)
        for trial_id, objective in told:
            trial = state.trials[trial_id]
            if trial_id < 6:
                # calibration regime: equal weights, declared ranges
                q = normalize_metric(trial.metrics["quality"], 0, 1, "benefit")
                c = normalize_metric(trial.metrics["cost"], 0, 10, "cost")
                expected = 0.5 * (eq["quality"] * q) + 0.5 * (eq["cost"] * c)
                assert objective == pytest.approx(expected, abs=1e-12)
            else:
                # frozen regime: stationary, must equal the final objective
                assert objective == trial.objective


class TestWeightLifecycle:
    def test_single_trial_adaptive_rescore(self):
        state = run_study(
            tiny_config(budget=1, normalization_mode="adaptive", weight_mode="adaptive",
                        n_calibration=1),
            tiny_eval,
        )
        t = state.trials[0]
        assert all(v == 0.5 for v in t.breakdown.normalized.values())
        assert t.breakdown.integral == pytest.approx(0.5)
        assert t.objective == pytest.approx(0.5)

    def test_adaptive_rescore_moves_with_population(self):
        def fixed_eval(vals):
            seq = iter(vals)

            def _eval(request):
                q = next(seq)
                return EvalResult(metrics={"quality": q, "cost": 5.0})

            return _eval

        config = tiny_config(
            budget=2, normalization_mode="adaptive", weight_mode="adaptive", n_calibration=1
        )
        state = run_study(config, fixed_eval([0.4, 0.8]))
        first = state.trials[0]
        # with a better second trial observed, trial 0 is no longer the best row
        assert first.breakdown.normalized["quality"] == 0.0

    def test_fixed_declared_scores_stationary_after_freeze(self):
        config = tiny_config(budget=12, n_calibration=6)
        state = run_study(config, tiny_eval)
        snapshot = {t.trial_id: t.objective for t in state.trials}
        rescore_history(state)  # idempotent under frozen weights
        assert {t.trial_id: t.objective for t in state.trials} == snapshot

    def test_frozen_weights_derive_from_calibration_prefix(self):
        config = tiny_config(budget=12, n_calibration=6)
        state = run_study(config, tiny_eval)
        assert state.frozen_weights is not None

        replay = StudyState(config=config, trials=state.trials[:6])
        replay_matrix = rescore_history(replay)
        assert replay_matrix is not None
        # freezing over the same prefix reproduces the same vector
        assert replay.frozen_weights == state.frozen_weights

    def test_equal_weights_during_calibration(self):
        # exhaust a 6-point grid before the calibration count is reached, so
        # the final rescoring still runs in the equal-weight regime
        config = tiny_config(
            optimizer=OptimizerConfig(kind="grid", resolution={"x": 3}),
            budget=20,
            n_calibration=20,
        )
        state = run_study(config, tiny_eval)
        assert len(state.trials) == 6
        assert state.frozen_weights is None
        for t in state.trials:
            assert t.breakdown.metric_weights == equal_weights(config.metrics)

    def test_rescore_empty_study(self):
        state = StudyState(config=tiny_config())
        with pytest.raises(EmptyStudy):
            rescore_history(state)


class TestPersistence:
    def test_roundtrip_field_by_field(self, tmp_path):
        config = tiny_config(budget=10, n_calibration=4)
        state = run_study(config, tiny_eval, study_dir=tmp_path / "s")
        loaded = load_study(tmp_path / "s")
        assert len(loaded.trials) == 10
        for a, b in zip(state.trials, loaded.trials):
            assert a.trial_id == b.trial_id
            assert a.params == b.params
            assert a.metrics == b.metrics
            assert a.status == b.status
            assert a.duration == b.duration
            assert a.objective == b.objective
            assert a.breakdown.normalized == b.breakdown.normalized
            assert a.breakdown.metric_weights == b.breakdown.metric_weights
            assert a.breakdown.subindex_values == b.breakdown.subindex_values
            assert a.breakdown.subindex_weights == b.breakdown.subindex_weights
            assert a.breakdown.integral == b.breakdown.integral

    def test_truncated_trailing_line_recovers(self, tmp_path):
        d = tmp_path / "s"
        run_study(tiny_config(budget=10, n_calibration=4), tiny_eval, study_dir=d)
        trials_file = d / "trials.jsonl"
        raw = trials_file.read_text()
        trials_file.write_text(raw[: len(raw) - 25])  # cut into the last line
        with pytest.warns(RecoveredWithWarning):
            loaded = load_study(d)
        assert len(loaded.trials) == 9

    def test_directory_contents(self, tmp_path):
        d = tmp_path / "s"
        run_study(tiny_config(budget=4, n_calibration=2), tiny_eval, study_dir=d)
        assert (d / "config.json").is_file()
        assert (d / "trials.jsonl").is_file()
        assert (d / "study.log").is_file()
        assert (d / "state.json").is_file()
        lines = (d / "trials.jsonl").read_text().strip().split("\n")
        assert len(lines) == 4
        first = json.loads(lines[0])
        assert first["schema_version"] == 1
        assert first["breakdown"] is not None and first["objective"] is not None

    def test_persisted_lines_rescored_at_freeze(self, tmp_path):
        d = tmp_path / "s"
        state = run_study(tiny_config(budget=8, n_calibration=6), tiny_eval, study_dir=d)
        lines = [json.loads(ln) for ln in (d / "trials.jsonl").read_text().strip().split("\n")]
        # frozen-weight scores were rewritten retroactively for trials 0..5
        for line, trial in zip(lines, state.trials):
            assert line["objective"] == trial.objective

    def test_unreadable_directory(self, tmp_path):
        from polytune.errors import StoreError

        with pytest.raises(StoreError):
            load_study(tmp_path / "missing")

    def test_fresh_run_refuses_existing_study(self, tmp_path):
        from polytune.errors import StoreError

        d = tmp_path / "s"
        run_study(tiny_config(budget=4, n_calibration=2), tiny_eval, study_dir=d)
        with pytest.raises(StoreError):
            run_study(tiny_config(budget=4, n_calibration=2), tiny_eval, study_dir=d)

    def test_evaluator_abort_persists_state(self, tmp_path):
        d = tmp_path / "s"

        def broken(request):
            raise EvaluatorUnavailable("gone")

        with pytest.raises(EvaluatorUnavailable):
            run_study(tiny_config(), broken, study_dir=d)
        loaded = load_study(d)
        assert loaded.trials == []
        assert loaded.pending  # the asked batch survives for resume


class TestResume:
    @pytest.mark.parametrize("kind", ["random", "tpe", "sepcmaes"])
    def test_interrupt_and_resume_bit_identical(self, tmp_path, kind):
        if kind == "sepcmaes":
            space = SearchSpace([continuous("x", 0, 1), continuous("y", 0, 1)])

            def evaluator(request):
                return EvalResult(
                    metrics={"quality": request.params["x"], "cost": request.params["y"]}
                )
        else:
            space = TINY_SPACE
            evaluator = tiny_eval
        config = lambda: tiny_config(
            space=space,
            optimizer=OptimizerConfig(kind=kind),
            budget=40,
            n_calibration=8,
            seed=11,
        )

        full = run_study(config(), evaluator, study_dir=tmp_path / "full")

        killer = KillAfter(20, evaluator)
        with pytest.raises(KeyboardInterrupt):
            run_study(config(), killer, study_dir=tmp_path / "cut")
        resumed = resume_study(tmp_path / "cut", evaluator)

        assert len(resumed.trials) == len(full.trials) == 40
        for a, b in zip(full.trials, resumed.trials):
            assert a.params == b.params
            assert a.objective == b.objective

    def test_resume_after_clean_finish_is_noop(self, tmp_path):
        d = tmp_path / "s"
        run_study(tiny_config(budget=6, n_calibration=3), tiny_eval, study_dir=d)
        state = resume_study(d, tiny_eval)
        assert len(state.trials) == 6

    @pytest.mark.parametrize("kind", ["random", "tpe"])
    def test_budget_extension_equals_straight_run(self, tmp_path, kind):
        config = lambda budget: tiny_config(
            budget=budget, n_calibration=6, optimizer=OptimizerConfig(kind=kind)
        )
        straight = run_study(config(30), tiny_eval, study_dir=tmp_path / "a")
        run_study(config(20), tiny_eval, study_dir=tmp_path / "b")
        extended = resume_study(tmp_path / "b", tiny_eval, budget=30)
        assert [t.params for t in straight.trials] == [t.params for t in extended.trials]
        assert [t.objective for t in straight.trials] == [t.objective for t in extended.trials]

    def test_budget_below_existing_rejected(self, tmp_path):
        run_study(tiny_config(budget=6, n_calibration=3), tiny_eval, study_dir=tmp_path / "s")
        with pytest.raises(ConfigError):
            resume_study(tmp_path / "s", tiny_eval, budget=2)

    def test_crash_between_persist_and_snapshot(self, tmp_path, monkeypatch):
        # trial lines hit disk but the batch-end snapshot does not: the
        # resume must reconcile against the ask-time snapshot, neither
        # re-evaluating nor double-telling
        from polytune.store import StudyStore

        full = run_study(tiny_config(budget=24), tiny_eval, study_dir=tmp_path / "full")

        real = StudyStore.write_snapshot
        calls = {"n": 0}

        def flaky(self, snapshot):
            calls["n"] += 1
            if calls["n"] == 30:  # a batch-end snapshot mid-study
                raise OSError("disk hiccup")
            return real(self, snapshot)

        monkeypatch.setattr(StudyStore, "write_snapshot", flaky)
        with pytest.raises(OSError):
            run_study(tiny_config(budget=24), tiny_eval, study_dir=tmp_path / "cut")
        monkeypatch.setattr(StudyStore, "write_snapshot", real)

        resumed = resume_study(tmp_path / "cut", tiny_eval)
        assert len(resumed.trials) == 24
        for a, b in zip(full.trials, resumed.trials):
            assert a.params == b.params
            assert a.objective == b.objective


class TestParallelism:
    def test_grid_suggestion_set_unchanged(self):
        config = lambda p: tiny_config(
            optimizer=OptimizerConfig(kind="grid", resolution={"x": 4}),
            budget=8,
            parallelism=p,
        )
        serial = run_study(config(1), tiny_eval)
        parallel = run_study(config(4), tiny_eval)
        key = lambda t: json.dumps(t.params, sort_keys=True)
        assert sorted(map(key, serial.trials)) == sorted(map(key, parallel.trials))

    def test_random_parallel_sequence_deterministic(self):
        config = lambda: tiny_config(budget=12, parallelism=3)
        a = run_study(config(), tiny_eval)
        b = run_study(config(), tiny_eval)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]

    def test_random_parallel_matches_serial_sequence(self):
        serial = run_study(tiny_config(budget=12, parallelism=1), tiny_eval)
        parallel = run_study(tiny_config(budget=12, parallelism=3), tiny_eval)
        assert [t.params for t in serial.trials] == [t.params for t in parallel.trials]


class TestSyntheticStudies:
    def test_synthetic_reference_study(self):
        config = StudyConfig(
            metrics=synthetic_metrics(),
            space=synthetic_space(),
            optimizer=OptimizerConfig(kind="random"),
            budget=25,
            seed=3,
            n_calibration=10,
        )
        state = run_study(config, synthetic_evaluator)
        assert len(state.trials) == 25
        assert all(t.status == "ok" for t in state.trials)
        assert all(0.0 <= t.objective <= 1.0 for t in state.trials)
        assert state.frozen_weights is not None
        for g in ("accuracy", "ranking", "diversity", "resources"):
            members = [s.name for s in config.metrics if s.group == g]
            assert sum(state.frozen_weights[m] for m in members) == pytest.approx(1.0, abs=1e-9)
