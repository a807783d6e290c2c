"""Versioned prompt and query assets, plus the message builders that fill them.

The chat templates live under ``assets/prompts`` as role-tagged message
lists with a ``fill`` section holding the slotted final turns.  Builders
return plain ``{"role", "content"}`` dicts ready for a chat client.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import yaml

@lru_cache(maxsize=None)
def load_prompt(name: str) -> dict:
    text = resources.files("kgexam").joinpath(f"assets/prompts/{name}.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


@lru_cache(maxsize=None)
def load_query(name: str) -> str:
    return resources.files("kgexam").joinpath(f"assets/queries/{name}.rq").read_text(encoding="utf-8")


def _filled(template: dict, **slots: str) -> list[dict]:
    messages = [dict(m) for m in template["messages"]]
    for turn in template["fill"]:
        messages.append({"role": turn["role"], "content": turn["content"].format(**slots)})
    return messages


def judge_messages(question: str, answers: str, response: str) -> list[dict]:
    """Judge conversation: the graded response rides in a final assistant turn
    and the verdict is the model's continuation."""
    return _filled(load_prompt("judge"), question=question, answers=answers, response=response)


def qg_messages(kind: str, subject: str, predicate: str, obj: str, alias: str | None = None) -> list[dict]:
    name = "qg_yesno" if kind == "yesno" else "qg_wh"
    template = load_prompt(name)
    clause = template["alias_clause"].format(alias=alias) if alias else ""
    return _filled(template, subject=subject, predicate=predicate, object=obj, alias_clause=clause)


def answer_messages(kind: str, question_text: str) -> list[dict]:
    name = "answer_yesno" if kind == "yesno" else "answer_wh"
    return _filled(load_prompt(name), question=question_text)
