"""Checker loop and difference-threshold evaluator.

The checker compares a predicted label sequence against freshly diarized
labels and either accepts the prediction or replaces it with the diarizer's
output. The evaluator guards windowed re-estimation: it compares a windowed
transition matrix against the full one and checks that each row has a clear
winner before the windowed model is trusted as a prediction basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import markov
from .errors import ValidationError
from .markov import (
    Argmax,
    PredictionMode,
    StateSequence,
    TransitionModel,
    UnseenRowPolicy,
    _as_labels,
)
from .metrics import EvaluationReport, evaluate, tpe


@dataclass(frozen=True)
class EveryIteration:
    """Run the checker on every iteration."""


@dataclass(frozen=True)
class FixedEvery:
    """Run the checker when the iteration index is a multiple of `every`."""

    every: int

    def __post_init__(self):
        if self.every < 1:
            raise ValidationError(f"checker interval must be >= 1, got {self.every}")


@dataclass(frozen=True)
class RandomBernoulli:
    """Run the checker with probability `p` per iteration, seeded."""

    p: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValidationError(f"checker probability must be in (0, 1], got {self.p}")


CheckerInterval = EveryIteration | FixedEvery | RandomBernoulli


@dataclass(frozen=True)
class Thresholds:
    """Acceptance and drift thresholds for the checker and evaluator.

    ``row_diff_min`` of None means the per-row winner must lead every other
    entry by more than ``1 / n_states``.
    """

    tpe_threshold: float = 20.0
    epps_threshold: float = 30.0
    matrix_diff_max: float = 0.15
    row_diff_min: float | None = None
    checker_interval: CheckerInterval = EveryIteration()

    def __post_init__(self):
        for name in ("tpe_threshold", "epps_threshold", "matrix_diff_max"):
            value = getattr(self, name)
            if value <= 0:
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.row_diff_min is not None and self.row_diff_min <= 0:
            raise ValidationError(f"row_diff_min must be positive, got {self.row_diff_min}")


class Decision(Enum):
    ACCEPT = "accept"
    REPLACE_WITH_ORACLE = "replace_with_oracle"


@dataclass(frozen=True)
class CheckDecision:
    """Checker verdict with the report it was derived from."""

    decision: Decision
    report: EvaluationReport


def decide(report: EvaluationReport, thresholds: Thresholds) -> Decision:
    """Accept iff TPE and every present-state EPPS are strictly below threshold.

    States absent from the actual sequence carry no evidence and never
    affect the decision.
    """
    if report.tpe >= thresholds.tpe_threshold:
        return Decision.REPLACE_WITH_ORACLE
    worst = report.max_epps()
    if worst is not None and worst >= thresholds.epps_threshold:
        return Decision.REPLACE_WITH_ORACLE
    return Decision.ACCEPT


def check_iteration(
    predicted: StateSequence | Sequence[int],
    oracle_labels: StateSequence | Sequence[int],
    thresholds: Thresholds,
    n_states: int,
) -> CheckDecision:
    """Evaluate a prediction against diarized labels and decide its fate."""
    report = evaluate(predicted, oracle_labels, n_states)
    return CheckDecision(decision=decide(report, thresholds), report=report)


def matrix_diff(
    full: TransitionModel, windowed: TransitionModel, max_allowed: float = 0.15
) -> tuple[float, bool]:
    """Largest elementwise |full - windowed| probability gap, and whether it passes.

    Passes when every element differs by at most `max_allowed`.
    """
    if full.n_states != windowed.n_states:
        raise ValidationError(
            f"state count mismatch: {full.n_states} vs {windowed.n_states}"
        )
    gap = float(np.abs(full.probs - windowed.probs).max())
    return gap, gap <= max_allowed


def row_diff_check(
    model: TransitionModel, min_gap: float | None = None
) -> tuple[list[bool], bool]:
    """Check each row's winner leads every other entry by more than `min_gap`.

    A row with a tied maximum fails: only one entry may represent the
    largest probability. Default gap is ``1 / n_states``.
    """
    gap = 1.0 / model.n_states if min_gap is None else min_gap
    passes: list[bool] = []
    for row in model.probs:
        winner = int(np.argmax(row))
        others = np.delete(row, winner)
        passes.append(bool(others.size == 0 or (row[winner] - others > gap).all()))
    return passes, all(passes)


@dataclass(frozen=True)
class ProceedNextWindow:
    """Both difference thresholds held; the windowed model is the basis."""

    model: TransitionModel
    max_abs_diff: float


@dataclass(frozen=True)
class FallbackPreviousWindow:
    """A threshold failed; fall back to the previous window's model."""

    model: TransitionModel
    max_abs_diff: float


EvaluatorOutcome = ProceedNextWindow | FallbackPreviousWindow


def evaluator_step(
    seq: StateSequence | Sequence[int],
    window_len: int,
    offset: int,
    full_model: TransitionModel,
    thresholds: Thresholds,
) -> EvaluatorOutcome:
    """Vet the window at `offset` as a prediction basis.

    When the windowed matrix drifts from the full one by more than
    ``matrix_diff_max`` in any cell, or any of its rows lacks a clear
    winner, the basis is re-estimated from the immediately preceding
    window (start clamped at 0) instead.
    """
    windowed = markov.windowed_transition(
        seq, window_len, offset, full_model.n_states, full_model.policy
    )
    gap, diff_ok = matrix_diff(full_model, windowed, thresholds.matrix_diff_max)
    _, rows_ok = row_diff_check(windowed, thresholds.row_diff_min)
    if diff_ok and rows_ok:
        return ProceedNextWindow(model=windowed, max_abs_diff=gap)
    previous_offset = max(offset - window_len, 0)
    previous = markov.windowed_transition(
        seq, window_len, previous_offset, full_model.n_states, full_model.policy
    )
    return FallbackPreviousWindow(model=previous, max_abs_diff=gap)


@dataclass(frozen=True)
class SessionConfig:
    """Everything a checker-loop session needs besides the oracle itself.

    ``seed`` drives all candidate sampling: candidate ``j`` of iteration
    ``i`` uses ``numpy.random.default_rng([seed, i, j])``. The synthetic
    matched oracle relies on this derivation to replay candidate 0's
    stream.
    """

    thresholds: Thresholds = Thresholds()
    mode: PredictionMode = Argmax()
    seed: int = 0
    candidate_count: int = 5
    window_len: int | None = None
    iterations: int | None = None
    policy: UnseenRowPolicy = UnseenRowPolicy.UNIFORM
    seg_len_s: float = 0.4
    input_paths: tuple[str, ...] = ()
    output_path: str | None = None

    def __post_init__(self):
        if self.candidate_count < 1:
            raise ValidationError(
                f"candidate_count must be >= 1, got {self.candidate_count}"
            )
        if self.window_len is not None and self.window_len < 2:
            raise ValidationError(f"window_len must be >= 2, got {self.window_len}")
        if self.iterations is not None and self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")


@dataclass(frozen=True)
class IterationRecord:
    """Trace entry for one prediction iteration."""

    index: int
    predicted: StateSequence
    checked: bool
    decision: CheckDecision | None
    evaluator: EvaluatorOutcome | None


@dataclass(frozen=True)
class SessionReport:
    """Full session trace: bootstrap, per-iteration records, final model."""

    bootstrap: StateSequence
    iterations: tuple[IterationRecord, ...]
    final_model: TransitionModel

    def checked_reports(self) -> list[EvaluationReport]:
        return [
            rec.decision.report for rec in self.iterations if rec.decision is not None
        ]

    def mean_tpe(self) -> float | None:
        """Mean TPE over checked iterations, None when nothing was checked."""
        reports = self.checked_reports()
        if not reports:
            return None
        return float(np.mean([r.tpe for r in reports]))


def _should_check(
    interval: CheckerInterval, iteration: int, bernoulli_rng: np.random.Generator
) -> bool:
    if isinstance(interval, EveryIteration):
        return True
    if isinstance(interval, FixedEvery):
        return iteration % interval.every == 0
    return bool(bernoulli_rng.random() < interval.p)


def _free_run(
    model: TransitionModel,
    anchor: int,
    length: int,
    mode: PredictionMode,
    rng: np.random.Generator | None,
) -> list[int]:
    labels = [markov.predict_next(model, anchor, mode, rng=rng)]
    for _ in range(length - 1):
        labels.append(markov.predict_next(model, labels[-1], mode, rng=rng))
    return labels


def run_session(
    oracle: Iterable[StateSequence | Sequence[int]],
    config: SessionConfig,
    n_states: int | None = None,
) -> SessionReport:
    """Drive the predict/check loop over an oracle of label sequences.

    The oracle's first sequence bootstraps the transition model; every
    later sequence is the ground truth for one prediction iteration. Each
    iteration rolls candidate sequences forward from the last anchored
    state, scores them against the oracle when the checker runs, and keeps
    the best. Accepted predictions feed online updates; rejected ones are
    replaced by re-estimating the model from the oracle labels. The oracle
    running dry ends the session cleanly with a partial report.

    `n_states` defaults to the bootstrap sequence's alphabet.
    """
    source: Iterator = iter(oracle)
    try:
        first = next(source)
    except StopIteration:
        raise ValidationError("oracle yielded no bootstrap sequence") from None
    if n_states is None:
        if isinstance(first, StateSequence):
            n_states = first.n_states
        else:
            n_states = int(max(first)) + 1
    bootstrap = StateSequence(labels=tuple(_as_labels(first)), n_states=n_states)

    model = markov.estimate_transition(bootstrap, n_states, config.policy)
    history = list(bootstrap.labels)
    anchor = history[-1]
    bernoulli_rng = np.random.default_rng([config.seed, 0xB0])
    records: list[IterationRecord] = []

    iteration = 0
    while config.iterations is None or iteration < config.iterations:
        iteration += 1
        try:
            actual_raw = next(source)
        except StopIteration:
            break
        actual = _as_labels(actual_raw)
        markov._validate_labels(actual, n_states)
        length = int(actual.size)
        if length == 0:
            raise ValidationError(f"oracle sequence {iteration} is empty")

        outcome: EvaluatorOutcome | None = None
        basis = model
        if config.window_len is not None:
            if config.window_len >= len(history):
                raise ValidationError(
                    f"window_len {config.window_len} must stay below the "
                    f"observed sequence length {len(history)}"
                )
            outcome = evaluator_step(
                history,
                config.window_len,
                len(history) - config.window_len,
                model,
                config.thresholds,
            )
            basis = outcome.model

        checked = _should_check(config.thresholds.checker_interval, iteration, bernoulli_rng)

        if isinstance(config.mode, Argmax):
            candidates = [_free_run(basis, anchor, length, Argmax(), None)]
        else:
            count = config.candidate_count if checked else 1
            candidates = []
            for j in range(count):
                rng = np.random.default_rng([config.seed, iteration, j])
                candidates.append(_free_run(basis, anchor, length, config.mode, rng))

        if checked:
            scored = [(tpe(cand, actual), j) for j, cand in enumerate(candidates)]
            _, best = min(scored)
            predicted_labels = candidates[best]
            verdict = check_iteration(
                predicted_labels, actual, config.thresholds, n_states
            )
            if verdict.decision is Decision.ACCEPT:
                model = update_from_labels(model, anchor, predicted_labels)
                history.extend(predicted_labels)
            else:
                model = markov.estimate_transition(actual, n_states, config.policy)
                history.extend(int(x) for x in actual)
            # The checker ran the diarizer, so its last label is the freshest
            # anchor for the next iteration regardless of the verdict.
            anchor = int(actual[-1])
        else:
            predicted_labels = candidates[0]
            verdict = None
            model = update_from_labels(model, anchor, predicted_labels)
            history.extend(predicted_labels)
            anchor = predicted_labels[-1]

        records.append(
            IterationRecord(
                index=iteration,
                predicted=StateSequence(labels=tuple(predicted_labels), n_states=n_states),
                checked=checked,
                decision=verdict,
                evaluator=outcome,
            )
        )

    return SessionReport(
        bootstrap=bootstrap, iterations=tuple(records), final_model=model
    )


def update_from_labels(
    model: TransitionModel, anchor: int, labels: Sequence[int]
) -> TransitionModel:
    """Apply online updates for anchor -> labels[0] and each adjacent pair."""
    current = model
    previous = anchor
    for label in labels:
        current = markov.update_online(current, previous, int(label))
        previous = int(label)
    return current
