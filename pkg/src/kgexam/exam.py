"""The examination loop: select a batch, generate questions, query the
examinee, verify, propagate, repeat until the running metrics converge.

Verification is first-token matching for Yes/No questions and a judge model
for Wh questions.  Every signal gets exactly one exam record; the interaction
log is line-delimited JSON written incrementally so it is safe to tail.
"""

from __future__ import annotations

import json
import logging
import re
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, IO, Sequence

import numpy as np

from . import llm, metrics, questions
from .graph import ParameterizedKG, Signal
from .questions import AnswerSets, Question

logger = logging.getLogger(__name__)

VERIFY_FIRST_TOKEN = "first-token"
VERIFY_JUDGE = "judge"

REASON_MATCHED = "matched"
REASON_MISMATCHED = "mismatched"
REASON_REFUSAL = "refusal"
REASON_JUDGE_YES = "judge-yes"
REASON_JUDGE_NO = "judge-no"
REASON_JUDGE_UNPARSEABLE = "judge-unparseable"


class JudgeUnavailable(Exception):
    """Judge could not produce a verdict; the edge is skipped this batch."""


class RunAborted(Exception):
    """Examinee permanently unavailable; partial results are attached."""

    def __init__(self, message: str, partial: "RunResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class RunConfig:
    iterations: int = 60
    batch_size: int = 64
    mode: str = questions.EASY
    seed: int = 0
    convergence_window: int = 5
    convergence_epsilon: float = 0.005
    propagation_enabled: bool = True
    propagate_to_dead: bool = False
    max_in_flight: int = 1

    def validate(self) -> "RunConfig":
        if self.iterations < 1:
            raise ValueError("iterations must be a positive integer")
        if self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        if self.mode not in questions.MODES:
            raise ValueError(f"mode must be one of {questions.MODES}")
        if self.convergence_window < 2:
            raise ValueError("convergence window must be >= 2")
        if self.convergence_epsilon <= 0:
            raise ValueError("convergence epsilon must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        return self

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "mode": self.mode,
            "seed": self.seed,
            "convergence_window": self.convergence_window,
            "convergence_epsilon": self.convergence_epsilon,
            "propagation_enabled": self.propagation_enabled,
            "propagate_to_dead": self.propagate_to_dead,
            "max_in_flight": self.max_in_flight,
        }


@dataclass(frozen=True)
class Verdict:
    correct: bool
    reason: str

    def __post_init__(self) -> None:
        if self.reason == REASON_REFUSAL and self.correct:
            raise ValueError("a refusal can never be correct")


@dataclass
class ExamRecord:
    iteration: int
    question: Question
    raw_response: str
    verdict: Verdict
    verification_mode: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "record": "exam",
            "iteration": self.iteration,
            "edge_id": self.question.edge_id,
            "question": self.question.to_dict(),
            "raw_response": self.raw_response,
            "correct": self.verdict.correct,
            "reason": self.verdict.reason,
            "verification_mode": self.verification_mode,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExamRecord":
        return cls(
            iteration=data["iteration"],
            question=Question.from_dict(data["question"]),
            raw_response=data["raw_response"],
            verdict=Verdict(correct=data["correct"], reason=data["reason"]),
            verification_mode=data["verification_mode"],
            timestamp=data["timestamp"],
        )


# -- verification ------------------------------------------------------

_FIRST_WORD = re.compile(r"[^A-Za-z]*([A-Za-z']+)")


def verify_yes_no(raw_response: str, expected: bool) -> Verdict:
    """Match the response's first word against yes/no, case-insensitively,
    after stripping leading whitespace, quotes, and punctuation.  Anything
    else (including refusal phrasings) is an incorrect refusal."""
    match = _FIRST_WORD.match(raw_response or "")
    word = match.group(1).lower() if match else ""
    if word not in ("yes", "no"):
        return Verdict(correct=False, reason=REASON_REFUSAL)
    said_yes = word == "yes"
    if said_yes == expected:
        return Verdict(correct=True, reason=REASON_MATCHED)
    return Verdict(correct=False, reason=REASON_MISMATCHED)


def verify_wh(question: Question, raw_response: str, judge) -> Verdict:
    """Ask the judge to grade the response against the gold labels; a reply
    beginning yes/no decides, anything else gets one retry and then counts as
    incorrect.  Empty responses are rejected without consulting the judge."""
    if question.kind != "wh":
        raise ValueError("verify_wh requires a Wh question")
    if not (raw_response or "").strip():
        return Verdict(correct=False, reason=REASON_JUDGE_NO)
    for attempt in range(2):
        try:
            reply = judge.judge(question.text, list(question.gold_labels), raw_response)
        except llm.LlmError as exc:
            raise JudgeUnavailable(str(exc)) from exc
        match = _FIRST_WORD.match(reply or "")
        word = match.group(1).lower() if match else ""
        if word == "yes":
            return Verdict(correct=True, reason=REASON_JUDGE_YES)
        if word == "no":
            return Verdict(correct=False, reason=REASON_JUDGE_NO)
    return Verdict(correct=False, reason=REASON_JUDGE_UNPARSEABLE)


def check_convergence(history: Sequence[tuple[float, float]], window: int, epsilon: float) -> bool:
    """True once both running metrics have a spread <= epsilon over the last
    `window` entries."""
    if len(history) < window:
        return False
    tail = history[-window:]
    for idx in (0, 1):
        values = [entry[idx] for entry in tail]
        if max(values) - min(values) > epsilon:
            return False
    return True


# -- clocks ------------------------------------------------------------


def wall_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


class LogicalClock:
    """Deterministic stand-in clock so simulated runs log identical bytes."""

    def __init__(self) -> None:
        self._tick = 0

    def __call__(self) -> str:
        self._tick += 1
        return f"t{self._tick:08d}"


# -- interaction log ---------------------------------------------------


class LogWriter:
    """Incremental line-delimited log with a run-header first line."""

    def __init__(self, path: str | Path, run_id: str, config: RunConfig):
        self.path = Path(path)
        self._fh: IO[str] = open(self.path, "w", encoding="utf-8")
        self._write({"record": "run_header", "run_id": run_id, "config": config.to_dict()})

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        self._fh.flush()

    def exam(self, record: ExamRecord) -> None:
        self._write(record.to_dict())

    def skip(self, iteration: int, edge_id: str, cause: str, timestamp: str) -> None:
        self._write({
            "record": "skip",
            "iteration": iteration,
            "edge_id": edge_id,
            "cause": cause,
            "timestamp": timestamp,
        })

    def close(self) -> None:
        self._fh.close()


@dataclass
class ExamLog:
    header: dict
    records: list[ExamRecord]
    skips: list[dict] = field(default_factory=list)


def read_log(path: str | Path) -> ExamLog:
    header: dict = {}
    records: list[ExamRecord] = []
    skips: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            kind = data.get("record")
            if kind == "run_header":
                header = data
            elif kind == "exam":
                records.append(ExamRecord.from_dict(data))
            elif kind == "skip":
                skips.append(data)
    return ExamLog(header=header, records=records, skips=skips)


# -- the loop ----------------------------------------------------------


@dataclass
class RunResult:
    pkg: ParameterizedKG
    records: list[ExamRecord]
    history: list[tuple[float, float]]
    converged_at: int | None = None
    iterations_run: int = 0
    run_id: str = ""


def _resolve_answers(
    batch_questions: list[Question],
    examinee,
    max_in_flight: int,
) -> list[str | Exception]:
    """Query the examinee for every question in the batch, optionally with a
    bounded thread pool; results keep batch order (the batch barrier)."""

    def ask(q: Question):
        try:
            return examinee.answer(q)
        except llm.LlmError as exc:
            return exc

    if max_in_flight <= 1 or len(batch_questions) <= 1:
        return [ask(q) for q in batch_questions]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(ask, batch_questions))


def run_evaluation(
    pkg: ParameterizedKG,
    config: RunConfig,
    examinee,
    *,
    generator=None,
    judge=None,
    answers: AnswerSets | None = None,
    log_path: str | Path | None = None,
    clock: Callable[[], str] | None = None,
    run_id: str | None = None,
) -> RunResult:
    """Run up to config.iterations select/ask/verify/update batches, stopping
    early once the running win-rate and zero-sense-rate converge.

    Edges whose question generation or judging fails are skipped for the
    batch (no signal): harness failures must not masquerade as examinee
    ignorance.  If the examinee becomes permanently unavailable the run
    aborts with the partial log already persisted.
    """
    config.validate()
    if answers is None:
        answers = questions.build_answer_sets(pkg)
    if clock is None:
        clock = wall_clock
    run_id = run_id or f"run-{uuid.uuid4().hex[:12]}"

    root = np.random.SeedSequence(config.seed)
    sel_ss, qg_ss = root.spawn(2)
    rng_select = np.random.default_rng(sel_ss)
    rng_qgen = np.random.default_rng(qg_ss)

    writer = LogWriter(log_path, run_id, config) if log_path else None
    records: list[ExamRecord] = []
    history: list[tuple[float, float]] = []
    converged_at: int | None = None
    iterations_run = 0

    try:
        for iteration in range(1, config.iterations + 1):
            iterations_run = iteration
            batch = pkg.select_batch(config.batch_size, rng_select)

            batch_questions: list[Question] = []
            for edge_id in batch:
                edge = pkg.edges[edge_id]
                kind = questions.choose_question_kind(
                    config.mode, pkg.out_degree(edge.subject), rng_qgen
                )
                try:
                    q = questions.generate_question(pkg, answers, edge, kind, rng_qgen, generator)
                except questions.GenerationUnavailable as exc:
                    logger.warning("question generation failed for %s: %s", edge_id, exc)
                    if writer:
                        writer.skip(iteration, edge_id, "generation-unavailable", clock())
                    continue
                batch_questions.append(q)

            responses = _resolve_answers(batch_questions, examinee, config.max_in_flight)

            signals: list[Signal] = []
            for q, response in zip(batch_questions, responses):
                if isinstance(response, Exception):
                    partial = RunResult(pkg, records, history, converged_at, iterations_run, run_id)
                    raise RunAborted(f"examinee unavailable: {response}", partial)
                if q.kind == "yesno":
                    verdict = verify_yes_no(response, q.expected_answer)
                    mode = VERIFY_FIRST_TOKEN
                else:
                    try:
                        verdict = verify_wh(q, response, judge)
                    except JudgeUnavailable as exc:
                        logger.warning("judge unavailable for %s: %s", q.edge_id, exc)
                        if writer:
                            writer.skip(iteration, q.edge_id, "judge-unavailable", clock())
                        continue
                    mode = VERIFY_JUDGE
                record = ExamRecord(
                    iteration=iteration,
                    question=q,
                    raw_response=response,
                    verdict=verdict,
                    verification_mode=mode,
                    timestamp=clock(),
                )
                records.append(record)
                if writer:
                    writer.exam(record)
                signals.append(Signal(edge_id=q.edge_id, correct=verdict.correct))

            if signals:
                pkg.apply_batch_update(
                    signals,
                    propagate=config.propagation_enabled,
                    propagate_to_dead=config.propagate_to_dead,
                )

            outcomes = metrics.outcomes_from_pkg(pkg)
            if any(o.examined for o in outcomes):
                history.append((metrics.win_rate(outcomes), metrics.zero_sense_rate(outcomes)))
            if check_convergence(history, config.convergence_window, config.convergence_epsilon):
                converged_at = iteration
                break
    finally:
        if writer:
            writer.close()

    return RunResult(
        pkg=pkg,
        records=records,
        history=history,
        converged_at=converged_at,
        iterations_run=iterations_run,
        run_id=run_id,
    )
