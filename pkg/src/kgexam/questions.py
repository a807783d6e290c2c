"""Turning sampled edges into exam items.

Yes/No questions present either the edge's true object or a hard negative
drawn from the predicate's candidate pool minus the subject's truth set.
Wh-questions are only generated while the subject's out-degree is below the
gate (10), and their gold set is every correct object for the (subject,
predicate) pair.  Rendering goes through a chat generator when one is
supplied, with a deterministic template fallback.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import llm, prompts
from .graph import Edge, ParameterizedKG

logger = logging.getLogger(__name__)

WH_OUT_DEGREE_GATE = 10

EASY = "EASY"
HARD = "HARD"
MODES = (EASY, HARD)


class NegativePoolExhausted(Exception):
    """No candidate object remains outside the truth set."""


class GenerationUnavailable(Exception):
    """The question generator failed after its retries."""


@dataclass(frozen=True)
class AnswerSets:
    """Truth sets keyed by (subject, predicate) and candidate sets keyed by
    predicate, both derived from a reference triplet store."""

    truth: Mapping[tuple[str, str], frozenset[str]]
    candidates: Mapping[str, frozenset[str]]

    def truth_for(self, subject: str, predicate: str) -> frozenset[str]:
        return self.truth.get((subject, predicate), frozenset())

    def candidates_for(self, predicate: str) -> frozenset[str]:
        return self.candidates.get(predicate, frozenset())


def build_answer_sets(
    pkg: ParameterizedKG,
    supplements: Iterable[tuple[str, str, str]] = (),
) -> AnswerSets:
    """Derive truth and candidate sets from every triplet in the reference
    graph (dead edges included: they are still facts) plus any supplemental
    (s, p, o) rows."""
    truth: dict[tuple[str, str], set[str]] = {}
    candidates: dict[str, set[str]] = {}
    rows = [(e.subject, e.predicate, e.object) for e in pkg.edges.values()]
    for s, p, o in list(rows) + list(supplements):
        truth.setdefault((s, p), set()).add(o)
        candidates.setdefault(p, set()).add(o)
    return AnswerSets(
        truth={k: frozenset(v) for k, v in truth.items()},
        candidates={k: frozenset(v) for k, v in candidates.items()},
    )


@dataclass(frozen=True)
class YesNoKind:
    expected_answer: bool


@dataclass(frozen=True)
class WhKind:
    pass


def choose_question_kind(mode: str, out_degree: int, rng: np.random.Generator) -> YesNoKind | WhKind:
    """EASY mode always asks Yes/No.  HARD mode flips a fair coin between the
    two kinds unless the out-degree gate forces Yes/No; Yes/No polarity is a
    second fair coin."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == HARD and out_degree < WH_OUT_DEGREE_GATE and rng.random() < 0.5:
        return WhKind()
    return YesNoKind(expected_answer=bool(rng.random() < 0.5))


def sample_negative(edge: Edge, answers: AnswerSets, rng: np.random.Generator) -> str:
    """Uniform draw from candidates(predicate) minus truth(subject, predicate)."""
    pool = sorted(answers.candidates_for(edge.predicate) - answers.truth_for(edge.subject, edge.predicate))
    if not pool:
        raise NegativePoolExhausted(
            f"no negative candidates for predicate {edge.predicate!r} against subject {edge.subject!r}"
        )
    return pool[int(rng.integers(len(pool)))]


@dataclass(frozen=True)
class Question:
    """A rendered exam item, traceable to its source edge."""

    edge_id: str
    kind: str  # "yesno" | "wh"
    text: str
    generation_mode: str  # "llm" | "template"
    expected_answer: bool | None = None
    presented_object: str | None = None
    gold_objects: tuple[str, ...] = ()
    gold_labels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "edge_id": self.edge_id,
            "kind": self.kind,
            "text": self.text,
            "generation_mode": self.generation_mode,
            "expected_answer": self.expected_answer,
            "presented_object": self.presented_object,
            "gold_objects": list(self.gold_objects),
            "gold_labels": list(self.gold_labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Question":
        return cls(
            edge_id=data["edge_id"],
            kind=data["kind"],
            text=data["text"],
            generation_mode=data["generation_mode"],
            expected_answer=data.get("expected_answer"),
            presented_object=data.get("presented_object"),
            gold_objects=tuple(data.get("gold_objects", ())),
            gold_labels=tuple(data.get("gold_labels", ())),
        )


_PERSON_WORDS = frozenset({
    "father", "mother", "spouse", "child", "children", "sibling", "head",
    "director", "author", "creator", "founder", "president", "monarch",
    "king", "queen", "leader", "chancellor", "mayor", "governor",
    "performer", "composer", "screenwriter", "designer", "architect",
    "member", "player", "coach", "owner",
})


def _wh_word(predicate_label: str) -> str:
    words = set(re.findall(r"[a-z]+", predicate_label.lower()))
    return "Who" if words & _PERSON_WORDS else "What"


def _copula(label: str) -> str:
    return "Are" if label.endswith("s") and not label.endswith("ss") else "Is"


def _alias_clause(entity) -> str:
    # first alias in serialized order, for determinism
    return f" (also known as {entity.aliases[0]})" if entity.aliases else ""


def template_yes_no(subject, predicate, presented_object_entity) -> str:
    obj_label = presented_object_entity.label
    return (
        f"{_copula(obj_label)} {obj_label} the {predicate.label} of "
        f"{subject.label}{_alias_clause(subject)}?"
    )


def template_wh(subject, predicate) -> str:
    return f"{_wh_word(predicate.label)} is the {predicate.label} of {subject.label}{_alias_clause(subject)}?"


def _leaks_gold(text: str, gold_labels: Iterable[str]) -> bool:
    lowered = text.lower()
    return any(lbl.lower() in lowered for lbl in gold_labels if lbl)


def _gold_label_pool(pkg: ParameterizedKG, gold_objects: Iterable[str]) -> tuple[str, ...]:
    labels: list[str] = []
    for oid in gold_objects:
        ent = pkg.entities.get(oid)
        if ent is None:
            labels.append(oid)
            continue
        labels.append(ent.label)
        labels.extend(ent.aliases)
    # preserve order, drop dups
    return tuple(dict.fromkeys(labels))


def render_question(
    pkg: ParameterizedKG,
    edge: Edge,
    kind: YesNoKind | WhKind,
    *,
    presented_object: str | None = None,
    answers: AnswerSets | None = None,
    generator=None,
) -> Question:
    """Render one exam item for an edge.

    For Yes/No, `presented_object` must already be chosen (the edge's object
    for a Yes, a sampled negative for a No).  Wh gold objects cover the whole
    truth set so the judge can accept any correct answer.  With a generator,
    the appendix-style few-shot prompt is used; Wh output containing a gold
    label verbatim is regenerated once and then falls back to the template.
    """
    subject = pkg.entities[edge.subject]
    predicate = pkg.predicates[edge.predicate]
    alias = subject.aliases[0] if subject.aliases else None

    if isinstance(kind, YesNoKind):
        obj_id = presented_object if presented_object is not None else edge.object
        obj_entity = pkg.entities[obj_id]
        if generator is None:
            text = template_yes_no(subject, predicate, obj_entity)
            mode = "template"
        else:
            text = _generate(generator, "yesno", subject.label, predicate.label, obj_entity.label, alias)
            mode = "llm"
        return Question(
            edge_id=edge.id,
            kind="yesno",
            text=text,
            generation_mode=mode,
            expected_answer=kind.expected_answer,
            presented_object=obj_id,
        )

    gold = answers.truth_for(edge.subject, edge.predicate) if answers else frozenset()
    gold_objects = tuple(sorted(gold | {edge.object}))
    gold_labels = _gold_label_pool(pkg, gold_objects)
    obj_label = pkg.entities[edge.object].label
    if generator is None:
        text = template_wh(subject, predicate)
        mode = "template"
    else:
        mode = "llm"
        text = _generate(generator, "wh", subject.label, predicate.label, obj_label, alias)
        if _leaks_gold(text, gold_labels):
            text = _generate(generator, "wh", subject.label, predicate.label, obj_label, alias)
        if _leaks_gold(text, gold_labels):
            logger.info("generated question for %s leaked a gold label twice; using template", edge.id)
            text = template_wh(subject, predicate)
            mode = "template"
    return Question(
        edge_id=edge.id,
        kind="wh",
        text=text,
        generation_mode=mode,
        gold_objects=gold_objects,
        gold_labels=gold_labels,
    )


def _generate(generator, kind: str, subject: str, predicate: str, obj: str, alias: str | None) -> str:
    messages = prompts.qg_messages(kind, subject, predicate, obj, alias)
    try:
        return generator.complete(messages).strip()
    except llm.LlmError as exc:
        raise GenerationUnavailable(str(exc)) from exc


def generate_question(
    pkg: ParameterizedKG,
    answers: AnswerSets,
    edge: Edge,
    kind: YesNoKind | WhKind,
    rng: np.random.Generator,
    generator=None,
) -> Question:
    """Question-kind plumbing around render_question: samples the hard
    negative for a No question, falling back to a Yes question (logged) when
    the negative pool is exhausted."""
    if isinstance(kind, YesNoKind):
        presented = edge.object
        if not kind.expected_answer:
            try:
                presented = sample_negative(edge, answers, rng)
            except NegativePoolExhausted:
                logger.info("negative pool exhausted for %s; falling back to a Yes question", edge.id)
                kind = YesNoKind(expected_answer=True)
        return render_question(pkg, edge, kind, presented_object=presented, generator=generator)
    return render_question(pkg, edge, kind, answers=answers, generator=generator)
