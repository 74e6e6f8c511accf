"""The optimize loop: ask, evaluate, score, tell, persist, resume.

One loop thread owns the optimizer and the store. Evaluations fan out to at
most ``parallelism`` workers; suggestions for a batch are drawn before
dispatch, so concurrent completion never changes the suggestion sequence.
Every batch is persisted (scored trials appended, engine snapshot replaced)
before the next ask, which makes a resumed serial study bit-identical to an
uninterrupted one.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError, Exhausted, RecoveredWithWarning, StoreError
from .evaluation import EvalRequest, EvalResult
from .optimizers import GridOptimizer, ObservedTrial, make_optimizer
from .store import StudyStore
from .study import (
    OK,
    StudyConfig,
    StudyState,
    Trial,
    history_view,
    rescore_history,
    validate_config,
)


def run_study(config: StudyConfig, evaluator, study_dir=None, on_trial=None) -> StudyState:
    """Run a fresh study to its budget (or grid exhaustion).

    ``evaluator`` is any callable EvalRequest -> EvalResult. When
    ``study_dir`` is given the study is persisted there; ``on_trial`` is
    called with (trial, best_objective_so_far) after each trial is scored.
    """
    validate_config(config)
    store = StudyStore(study_dir, create=True) if study_dir is not None else None
    if store:
        if store.has_trials():
            raise StoreError(
                f"{store.path} already holds a study; resume it or pick a fresh directory"
            )
        store.write_config(config)
        store.log(f"study started: budget={config.budget} optimizer={config.optimizer.kind}")
    state = StudyState(config=config)
    optimizer = make_optimizer(config.optimizer, config.space, config.seed)
    _wire_stderr(evaluator, store)
    return _loop(state, optimizer, evaluator, store, on_trial)


def _wire_stderr(evaluator, store: StudyStore | None) -> None:
    # route evaluator stderr into study.log unless the caller set a sink
    if store and getattr(evaluator, "stderr_sink", "absent") is None:
        evaluator.stderr_sink = store.log


def load_study(study_dir) -> StudyState:
    """Reconstruct a StudyState from a study directory and rescore it."""
    state, _optimizer, _store = _load(study_dir)
    if state.completed():
        rescore_history(state)
    return state


def resume_study(study_dir, evaluator, budget=None, on_trial=None) -> StudyState:
    """Continue a persisted study where it stopped.

    The engine snapshot restores the optimizer and random stream, so a
    resumed serial study replays exactly the trials an uninterrupted run
    would have produced. ``budget`` optionally raises the trial budget.
    """
    state, optimizer, store = _load(study_dir)
    if budget is not None:
        if budget < len(state.trials):
            raise ConfigError(f"budget {budget} below the {len(state.trials)} existing trials")
        state.config.budget = budget
        store.write_config(state.config)
    store.log(f"study resumed at trial {len(state.trials)}")
    _wire_stderr(evaluator, store)
    return _loop(state, optimizer, evaluator, store, on_trial)


def _load(study_dir):
    store = StudyStore(study_dir)
    config = store.read_config()
    validate_config(config)
    trials = store.read_trials()
    state = StudyState(config=config, trials=trials)
    optimizer = make_optimizer(config.optimizer, config.space, config.seed)

    state.persisted = len(trials)

    snap = store.read_snapshot()
    if snap is not None and snap.get("n_trials", 0) <= len(trials):
        # a snapshot can trail the log by the trials persisted after it was
        # written; those head the pending list and are already evaluated
        drop = len(trials) - snap.get("n_trials", 0)
        pending = [dict(p) for p in snap.get("pending", [])][drop:]
        state.pending = pending
        state.batch_start = snap.get("batch_start")
        if snap.get("optimizer") is not None:
            optimizer.load_state_dict(snap["optimizer"])
    else:
        if snap is not None:
            warnings.warn(
                "engine snapshot is ahead of the trial log; suggestion stream restarts",
                RecoveredWithWarning,
                stacklevel=2,
            )
        if isinstance(optimizer, GridOptimizer):
            # without a snapshot the grid cursor is still derivable
            optimizer.load_state_dict({"cursor": len(trials)})
    return state, optimizer, store


def _snapshot(state: StudyState, optimizer, store: StudyStore | None) -> None:
    if store is None:
        return
    store.write_snapshot(
        {
            "n_trials": len(state.trials),
            "batch_start": state.batch_start,
            "pending": state.pending,
            "optimizer": optimizer.state_dict(),
            "frozen_weights": state.frozen_weights,
        }
    )


def _evaluate_batch(state: StudyState, evaluator) -> list[EvalResult]:
    base = len(state.trials)
    requests = [EvalRequest(base + i, dict(p)) for i, p in enumerate(state.pending)]
    if state.config.parallelism > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=state.config.parallelism) as pool:
            return list(pool.map(evaluator, requests))
    return [evaluator(r) for r in requests]


def _finish_batch(state: StudyState, optimizer, store: StudyStore | None, on_trial) -> None:
    # Persist strictly before telling: the on-disk snapshot stays the
    # ask-time one (pre-tell optimizer) until the batch-end snapshot below,
    # so a crash anywhere in between resumes by re-running this function
    # deterministically, never telling twice.
    if state.batch_start is None:
        return
    had_frozen = state.frozen_weights is not None
    if state.completed():
        rescore_history(state)
    else:
        for t in state.trials:
            t.breakdown, t.objective = None, 0.0
    froze_now = not had_frozen and state.frozen_weights is not None

    if store:
        if froze_now:
            store.rewrite_trials(state.trials)  # freeze rescored earlier trials
        else:
            for t in state.trials[state.persisted :]:
                store.append_trial(t)
        state.persisted = len(state.trials)

    batch = state.trials[state.batch_start :]
    optimizer.tell([ObservedTrial(t.trial_id, t.params, t.objective) for t in batch])

    state.batch_start = None
    state.pending = []
    _snapshot(state, optimizer, store)

    if store:
        for t in batch:
            store.log(
                f"trial {t.trial_id} {t.status} objective={t.objective:.6f}"
                + (f" ({t.message})" if t.message else "")
            )
    if on_trial:
        batch_ids = {t.trial_id for t in batch}
        best = None
        for t in state.trials:
            if t.objective is not None:
                best = t.objective if best is None else max(best, t.objective)
            if t.trial_id in batch_ids:
                on_trial(t, best)


def _loop(state: StudyState, optimizer, evaluator, store, on_trial) -> StudyState:
    config = state.config
    try:
        while True:
            if not state.pending and state.batch_start is None:
                remaining = config.budget - len(state.trials)
                if remaining <= 0:
                    break
                try:
                    batch = optimizer.ask(history_view(state), min(config.parallelism, remaining))
                except Exhausted:
                    if store:
                        store.log("optimizer exhausted; study complete")
                    break
                batch = batch[:remaining]  # sep-CMA-ES generations ignore the hint
                if not batch:
                    break
                state.batch_start = len(state.trials)
                state.pending = batch
                _snapshot(state, optimizer, store)

            if state.pending:
                results = _evaluate_batch(state, evaluator)
                base = len(state.trials)
                for i, (params, result) in enumerate(zip(state.pending, results)):
                    state.trials.append(
                        Trial(
                            trial_id=base + i,
                            params=dict(params),
                            metrics=result.metrics,
                            status=OK if result.status == OK else "failed",
                            message=result.message,
                            duration=result.duration,
                        )
                    )
            _finish_batch(state, optimizer, store, on_trial)
    except BaseException:
        # the last written snapshot (ask-time or batch-end) is already the
        # correct resume point; writing another here could capture a
        # half-finished batch
        if store:
            store.log("study aborted; state persisted for resume")
        raise
    finally:
        if store:
            store.close()
    return state
