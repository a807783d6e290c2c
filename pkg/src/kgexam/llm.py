"""Chat-completion gateway for the three model roles (examinee, question
generator, judge), plus deterministic simulated counterparts for testing
and convergence studies.

The HTTP client speaks the de-facto chat wire shape (role-tagged message
array in, choice array out) with configurable path and header names, retries
transient failures with exponential backoff plus jitter, and honors
Retry-After hints.  Credentials are resolved from an environment variable at
request time and never stored or logged.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import requests

from . import prompts

logger = logging.getLogger(__name__)

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

REFUSAL_TEXT = "I am sorry, but I couldn't find any information on that."


class LlmError(Exception):
    pass


class Unavailable(LlmError):
    """Retries exhausted against a transient failure."""


class ProtocolError(LlmError):
    """Non-retryable response (bad status or malformed payload)."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError("user/assistant messages must have content")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class ClientConfig:
    """Connection settings for one chat endpoint.

    `api_key_env` names the environment variable holding the credential; the
    secret itself is read per-request and never serialized.
    """

    base_url: str
    model: str
    api_key_env: str = "KGEXAM_API_KEY"
    path: str = "/v1/chat/completions"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 30.0
    max_in_flight: int = 4
    temperature: float | None = None
    extra_headers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "path": self.path,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "max_in_flight": self.max_in_flight,
            "temperature": self.temperature,
        }


def backoff_delay(attempt: int, base: float, cap: float) -> float:
    """Pre-jitter delay before retry number `attempt` (0-based); non-decreasing."""
    return min(cap, base * (2.0 ** attempt))


class ChatClient:
    """Shareable chat-completion client with an in-flight limiter."""

    def __init__(self, config: ClientConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(config.max_in_flight)
        self.last_retry_after: float | None = None

    def __repr__(self) -> str:  # never show resolved credentials
        return f"ChatClient(base_url={self.config.base_url!r}, model={self.config.model!r})"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", **self.config.extra_headers}
        secret = os.environ.get(self.config.api_key_env, "")
        if secret:
            scheme = self.config.auth_scheme
            headers[self.config.auth_header] = f"{scheme} {secret}" if scheme else secret
        return headers

    def complete(
        self,
        messages: Sequence[ChatMessage | Mapping[str, str]],
        temperature: float | None = None,
    ) -> str:
        """Return the first generated message's text, retrying transient
        failures with exponential backoff plus jitter."""
        if not messages:
            raise ValueError("messages must be non-empty")
        payload = {
            "model": self.config.model,
            "messages": [m.to_dict() if isinstance(m, ChatMessage) else dict(m) for m in messages],
        }
        temp = self.config.temperature if temperature is None else temperature
        if temp is not None:
            payload["temperature"] = temp

        url = self.config.base_url.rstrip("/") + self.config.path
        last_error: str = ""
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = backoff_delay(attempt - 1, self.config.backoff_base, self.config.backoff_cap)
                if self.last_retry_after is not None:
                    delay = max(delay, self.last_retry_after)
                time.sleep(delay * (1.0 + 0.25 * random.random()))
            try:
                with self._gate:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self.config.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                logger.debug("attempt %d/%d: %s", attempt + 1, self.config.max_retries + 1, last_error)
                continue

            if resp.status_code in RETRYABLE_STATUSES:
                retry_after = resp.headers.get("Retry-After")
                self.last_retry_after = float(retry_after) if retry_after and retry_after.replace(".", "", 1).isdigit() else None
                last_error = f"HTTP {resp.status_code}"
                logger.debug("attempt %d/%d: %s", attempt + 1, self.config.max_retries + 1, last_error)
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"HTTP {resp.status_code} from {url}",
                    status=resp.status_code,
                    body_excerpt=resp.text[:200],
                )
            self.last_retry_after = None
            try:
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise ProtocolError(
                    "malformed chat-completion payload", status=resp.status_code,
                    body_excerpt=resp.text[:200],
                ) from None
        raise Unavailable(f"exhausted {self.config.max_retries + 1} attempts against {url}: {last_error}")


# -- simulated roles ---------------------------------------------------


class SimulatedExaminee:
    """Deterministic stand-in examinee.

    Answers each question correctly with probability 1 - error_prob(edge),
    refuses with probability refusal_prob, and is fully reproducible given
    the seed and the call sequence.
    """

    def __init__(
        self,
        error_prob: Mapping[str, float] | None = None,
        default_error_prob: float = 0.0,
        refusal_prob: float = 0.0,
        seed: int = 0,
    ):
        self.error_prob = dict(error_prob or {})
        for eid, p in self.error_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"error probability for {eid!r} out of [0,1]: {p}")
        if not 0.0 <= default_error_prob <= 1.0:
            raise ValueError("default_error_prob out of [0,1]")
        if not 0.0 <= refusal_prob <= 1.0:
            raise ValueError("refusal_prob out of [0,1]")
        self.default_error_prob = default_error_prob
        self.refusal_prob = refusal_prob
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    @staticmethod
    def _distractor(edge_id: str) -> str:
        tag = hashlib.sha1(edge_id.encode("utf-8")).hexdigest()[:8]
        return f"unknown-{tag}"

    def answer(self, question) -> str:
        if self.refusal_prob > 0.0 and self._rng.random() < self.refusal_prob:
            return REFUSAL_TEXT
        p_err = self.error_prob.get(question.edge_id, self.default_error_prob)
        correct = self._rng.random() >= p_err
        if question.kind == "yesno":
            say_yes = question.expected_answer if correct else not question.expected_answer
            return "Yes, that is right." if say_yes else "No, that is not the case."
        gold = question.gold_labels[0] if question.gold_labels else question.edge_id
        answer = gold if correct else self._distractor(question.edge_id)
        return f"The answer is {answer}."


class SimulatedJudge:
    """Grades a Wh response by gold-label containment; replies Yes./No."""

    def judge(self, question_text: str, gold_labels: Sequence[str], response: str) -> str:
        lowered = response.lower()
        hit = any(lbl.lower() in lowered for lbl in gold_labels if lbl)
        return "Yes." if hit else "No."


# -- HTTP-backed roles -------------------------------------------------


class HttpExaminee:
    """Examinee backed by a chat endpoint, prompted with the few-shot answer
    templates for the question's kind."""

    def __init__(self, client: ChatClient):
        self.client = client

    def answer(self, question) -> str:
        return self.client.complete(prompts.answer_messages(question.kind, question.text))


class HttpJudge:
    def __init__(self, client: ChatClient):
        self.client = client

    def judge(self, question_text: str, gold_labels: Sequence[str], response: str) -> str:
        messages = prompts.judge_messages(question_text, ", ".join(gold_labels), response)
        return self.client.complete(messages, temperature=0.0)
