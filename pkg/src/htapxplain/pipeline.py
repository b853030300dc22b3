"""End-to-end explanation flow: embed, retrieve, prompt, generate, review.

``explain`` is a read-only pipeline; the knowledge base changes only through
``apply_review``, which is how expert corrections and approved generations
flow back in for future retrieval.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import LlmError, ParamError, StateError
from .kb import KnowledgeStore, Provenance
from .llm import LlmClient, LlmConfig
from .plans import ExecutionResult, PlanPair
from .prompts import PromptBundle, Question, build_baseline_prompt, build_prompt
from .router import RouterModel, embed_pair

DEFAULT_K = 2


class Status(str, Enum):
    EXPLAINED = "EXPLAINED"
    NONE_RESPONSE = "NONE_RESPONSE"
    ERROR = "ERROR"


class Verdict(str, Enum):
    CORRECT = "CORRECT"
    INCORRECT = "INCORRECT"


@dataclass(frozen=True)
class ExplainRequest:
    query_text: str
    pair: PlanPair
    result: ExecutionResult | None = None
    user_context: str | None = None
    k: int = DEFAULT_K
    baseline: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ParamError(f"k must be >= 1, got {self.k}")

    def question(self) -> Question:
        return Question(self.query_text, self.pair, self.result)


@dataclass(frozen=True)
class Timings:
    encode_ms: float = 0.0
    search_ms: float = 0.0
    llm_think_ms: float = 0.0
    llm_generate_ms: float = 0.0


@dataclass(frozen=True)
class ExplanationResult:
    status: Status
    explanation: str | None
    retrieved: tuple[tuple[int, float], ...]
    timings: Timings
    prompt_fingerprint: str
    error: str | None = None
    # context for reviews and follow-ups, not part of the wire shape
    question: Question | None = None
    key: np.ndarray | None = None
    prompt: PromptBundle | None = None

    def __post_init__(self):
        if self.status is Status.EXPLAINED and not (self.explanation or "").strip():
            raise ParamError("EXPLAINED result needs a non-empty explanation")
        if self.status is Status.NONE_RESPONSE and self.explanation is not None:
            raise ParamError("NONE_RESPONSE result must carry no explanation")


@dataclass(frozen=True)
class ReviewRecord:
    verdict: Verdict
    reviewer: str
    corrected_text: str | None = None
    result_id: str | None = None
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        if self.verdict is Verdict.INCORRECT and not (self.corrected_text or "").strip():
            raise ParamError("INCORRECT review needs the corrected text")


def parse_response(raw: str) -> str | None:
    """The None fallback is an exact match after trim and case-fold (optional
    trailing period), so explanations that merely mention "none" pass through."""
    normalized = raw.strip().casefold()
    if normalized in ("none", "none."):
        return None
    return raw


def explain(
    request: ExplainRequest,
    model: RouterModel,
    store: KnowledgeStore,
    llm: LlmClient | LlmConfig,
) -> ExplanationResult:
    """Embed the pair, retrieve neighbors, prompt the provider, parse the
    answer. Provider failures come back as status ERROR, never as a crash,
    and nothing here writes to the store."""
    if isinstance(llm, LlmConfig):
        llm = LlmClient(llm)

    t0 = time.perf_counter()
    key = embed_pair(model, request.pair)
    t1 = time.perf_counter()

    if request.baseline:
        hits = []
        search_ms = 0.0
        bundle = build_baseline_prompt(request.question(), request.user_context)
    else:
        hits = store.top_k(key, request.k)
        search_ms = (time.perf_counter() - t1) * 1e3
        bundle = build_prompt(request.question(), hits, request.user_context)

    retrieved = tuple((h.entry.id, h.similarity) for h in hits)
    base = dict(
        retrieved=retrieved,
        prompt_fingerprint=bundle.fingerprint(),
        question=request.question(),
        key=key,
        prompt=bundle,
    )
    try:
        completion = llm.complete(bundle)
    except LlmError as exc:
        timings = Timings(encode_ms=(t1 - t0) * 1e3, search_ms=search_ms)
        return ExplanationResult(
            status=Status.ERROR, explanation=None, timings=timings,
            error=str(exc), **base,
        )
    timings = Timings(
        encode_ms=(t1 - t0) * 1e3,
        search_ms=search_ms,
        llm_think_ms=completion.think_ms,
        llm_generate_ms=completion.generate_ms,
    )
    explanation = parse_response(completion.text)
    if explanation is None:
        return ExplanationResult(
            status=Status.NONE_RESPONSE, explanation=None, timings=timings, **base
        )
    return ExplanationResult(
        status=Status.EXPLAINED, explanation=explanation, timings=timings, **base
    )


def apply_review(
    store: KnowledgeStore,
    review: ReviewRecord,
    result: ExplanationResult,
    question: Question | None = None,
) -> int:
    """Bank the reviewed explanation: corrections go in under the expert's
    text, approvals under the generated text. Returns the new entry id."""
    if result.status is not Status.EXPLAINED:
        raise StateError(f"cannot review a result with status {result.status.value}")
    question = question or result.question
    if question is None:
        raise StateError("review needs the original question")
    if question.result is None:
        raise StateError("cannot bank an explanation without an execution result")
    if result.key is None:
        raise StateError("result carries no embedding key")

    if review.verdict is Verdict.INCORRECT:
        explanation = review.corrected_text
        provenance = Provenance.EXPERT_CORRECTION
    else:
        explanation = result.explanation
        provenance = Provenance.APPROVED_GENERATION
    return store.insert(
        key=result.key,
        query_text=question.query_text,
        plan_details=question.pair,
        execution_result=question.result,
        explanation=explanation,
        provenance=provenance,
    )


@dataclass
class ExplainSession:
    """One conversation: the original prompt plus alternating follow-up turns."""

    prompt: PromptBundle | None = None
    transcript: list[dict[str, str]] = field(default_factory=list)

    @classmethod
    def from_result(cls, result: ExplanationResult) -> "ExplainSession":
        if result.status is not Status.EXPLAINED or result.prompt is None:
            raise StateError("sessions start from an EXPLAINED result")
        return cls(prompt=result.prompt,
                   transcript=[{"role": "assistant", "content": result.explanation}])


def followup(
    session: ExplainSession,
    question_text: str,
    llm: LlmClient | LlmConfig,
) -> str:
    """Ask a follow-up inside an existing session; the provider sees the whole
    transcript including the original QUESTION block."""
    if session.prompt is None or not session.transcript:
        raise StateError("session has no prior explanation to follow up on")
    if not question_text.strip():
        raise ParamError("follow-up question is empty")
    if isinstance(llm, LlmConfig):
        llm = LlmClient(llm)
    messages = session.prompt.messages() + session.transcript + [
        {"role": "user", "content": question_text}
    ]
    completion = llm.complete_messages(messages)
    session.transcript.append({"role": "user", "content": question_text})
    session.transcript.append({"role": "assistant", "content": completion.text})
    return completion.text


def result_to_wire(result: ExplanationResult) -> dict:
    return {
        "status": result.status.value,
        "explanation": result.explanation,
        "retrieved": [
            {"entry_id": eid, "similarity": sim} for eid, sim in result.retrieved
        ],
        "timings": {
            "encode_ms": result.timings.encode_ms,
            "search_ms": result.timings.search_ms,
            "llm_think_ms": result.timings.llm_think_ms,
            "llm_generate_ms": result.timings.llm_generate_ms,
        },
        "prompt_fingerprint": result.prompt_fingerprint,
        "error": result.error,
    }
