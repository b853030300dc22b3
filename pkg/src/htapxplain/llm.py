"""Provider boundary for explanation generation.

Two providers share one contract: a deterministic MOCK for tests and offline
runs, and a REMOTE adapter speaking the common chat-completion wire shape
({model, messages, max_tokens} in, choices[0].message.content out). The
credential is read from the environment, never from config files.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum

import httpx

from .errors import LlmAuthError, LlmHttpError, LlmTimeoutError, ParamError
from .prompts import PromptBundle

API_KEY_ENV = "HTAPXPLAIN_LLM_API_KEY"

NONE_ANSWER = "None"


class Provider(str, Enum):
    MOCK = "MOCK"
    REMOTE = "REMOTE"


class MockMode(str, Enum):
    """What the MOCK provider does with a prompt.

    ECHO answers from the question itself (and is therefore always "right"),
    NONE refuses everything, NONE_BELOW_K refuses prompts that carry fewer
    than ``mock_min_knowledge`` KNOWLEDGE blocks, mimicking the way sparse
    retrieval drives up None responses.
    """

    ECHO = "ECHO"
    NONE = "NONE"
    NONE_BELOW_K = "NONE_BELOW_K"


@dataclass(frozen=True)
class LlmConfig:
    provider: Provider = Provider.MOCK
    endpoint: str | None = None
    model_name: str = "mock-explainer"
    timeout_s: float = 30.0
    max_output_tokens: int = 512
    mock_mode: MockMode = MockMode.ECHO
    mock_min_knowledge: int = 2
    mock_answers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ParamError("timeout_s must be positive")
        if self.max_output_tokens < 1:
            raise ParamError("max_output_tokens must be >= 1")
        if self.provider is Provider.REMOTE and not self.endpoint:
            raise ParamError("REMOTE provider needs an endpoint")


@dataclass(frozen=True)
class Completion:
    text: str
    think_ms: float
    generate_ms: float


def _all_content(messages: list[dict[str, str]]) -> str:
    return "\n".join(m.get("content", "") for m in messages)


def _knowledge_count(messages: list[dict[str, str]]) -> int:
    return len(re.findall(r"^KNOWLEDGE:$", _all_content(messages), flags=re.M))


def _question_winner(messages: list[dict[str, str]]) -> str | None:
    text = _all_content(messages)
    m = re.search(r"^new execution result:\n(AP|TP) is faster", text, flags=re.M)
    return m.group(1) if m else None


def _mock_answer(config: LlmConfig, messages: list[dict[str, str]],
                 fingerprint: str | None) -> str:
    if fingerprint and fingerprint in config.mock_answers:
        return config.mock_answers[fingerprint]
    if config.mock_mode is MockMode.NONE:
        return NONE_ANSWER
    if (config.mock_mode is MockMode.NONE_BELOW_K
            and _knowledge_count(messages) < config.mock_min_knowledge):
        return NONE_ANSWER
    winner = _question_winner(messages)
    if winner is None:
        return NONE_ANSWER
    loser = "TP" if winner == "AP" else "AP"
    return (
        f"{winner} is faster for this query. Based on the retrieved knowledge, "
        f"the {winner} plan's operator mix suits this workload better than the "
        f"{loser} plan's, independent of the incomparable cost estimates."
    )


class LlmClient:
    """Stateful wrapper so tests and sessions can inspect the last request."""

    def __init__(self, config: LlmConfig):
        self.config = config
        self.last_messages: list[dict[str, str]] | None = None

    def complete(self, prompt: PromptBundle) -> Completion:
        return self.complete_messages(prompt.messages(), fingerprint=prompt.fingerprint())

    def complete_messages(
        self, messages: list[dict[str, str]], fingerprint: str | None = None
    ) -> Completion:
        self.last_messages = [dict(m) for m in messages]
        if self.config.provider is Provider.MOCK:
            t0 = time.perf_counter()
            answer = _mock_answer(self.config, messages, fingerprint)
            t1 = time.perf_counter()
            # the mock has no separate reasoning phase, all its time is generation
            return Completion(answer, think_ms=0.0, generate_ms=(t1 - t0) * 1e3)
        return _remote_complete(self.config, messages)


def _remote_complete(config: LlmConfig, messages: list[dict[str, str]]) -> Completion:
    api_key = os.environ.get(API_KEY_ENV)
    if not api_key:
        raise LlmAuthError(f"set {API_KEY_ENV} to use the REMOTE provider")
    payload = {
        "model": config.model_name,
        "messages": messages,
        "max_tokens": config.max_output_tokens,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    last_exc: Exception | None = None
    t0 = time.perf_counter()
    for attempt in range(2):  # one bounded retry on transport errors
        try:
            response = httpx.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout_s
            )
        except httpx.TimeoutException as exc:
            last_exc = LlmTimeoutError(f"no response within {config.timeout_s}s")
            last_exc.__cause__ = exc
            continue
        except httpx.TransportError as exc:
            last_exc = LlmHttpError(0, f"transport failure: {exc}")
            last_exc.__cause__ = exc
            continue
        if response.status_code in (401, 403):
            raise LlmAuthError(f"provider rejected the credential ({response.status_code})")
        if response.status_code != 200:
            raise LlmHttpError(response.status_code, response.text[:200])
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        try:
            text = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise LlmHttpError(200, "malformed completion body") from exc
        # without streaming the reasoning phase is not observable separately
        return Completion(str(text), think_ms=0.0, generate_ms=elapsed_ms)
    raise last_exc


def complete(config: LlmConfig, prompt: PromptBundle) -> Completion:
    return LlmClient(config).complete(prompt)
