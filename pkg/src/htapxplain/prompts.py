"""Prompt assembly: verbatim template blocks plus rendered KNOWLEDGE/QUESTION sections.

The background and task texts live as versioned assets under ``templates/`` and
are stitched into prompts unmodified; rendering only normalizes line endings.
Every prompt, retrieval-augmented or baseline, carries the sentence forbidding
cross-engine cost comparison, because optimizer cost units differ per engine.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import ParamError
from .kb import SimilarityHit
from .plans import (
    ExecutionResult,
    PlanPair,
    PlanTree,
    plan_node_to_dict,
)

PROHIBITION_SENTENCE = "not allowed to compare the cost estimates"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = resources.files("htapxplain.templates").joinpath(name).read_text(
        encoding="utf-8"
    )
    return text.replace("\r\n", "\n").rstrip("\n")


@dataclass(frozen=True)
class Question:
    """What the user wants explained: SQL text, both plans, and (when the
    query already ran) its measured outcome."""

    query_text: str
    pair: PlanPair
    result: ExecutionResult | None = None

    def __post_init__(self):
        if not self.query_text.strip():
            raise ParamError("question needs non-empty query text")


@dataclass(frozen=True)
class PromptBundle:
    background: str
    task_description: str
    knowledge_blocks: tuple[str, ...]
    question_block: str
    user_context: str | None = None

    def __post_init__(self):
        if PROHIBITION_SENTENCE not in self.background:
            raise ParamError("background is missing the cost-comparison prohibition")
        if not self.question_block.strip():
            raise ParamError("prompt needs exactly one QUESTION block")

    def render(self) -> str:
        parts = [self.background, self.task_description]
        parts.extend(self.knowledge_blocks)
        parts.append(self.question_block)
        if self.user_context:
            parts.append(self.user_context)
        return "\n\n".join(parts)

    def messages(self) -> list[dict[str, str]]:
        """Chat-shaped view: static instructions as system, content as user."""
        body = list(self.knowledge_blocks) + [self.question_block]
        if self.user_context:
            body.append(self.user_context)
        return [
            {"role": "system", "content": f"{self.background}\n\n{self.task_description}"},
            {"role": "user", "content": "\n\n".join(body)},
        ]

    def fingerprint(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()


def _plan_text(tree: PlanTree) -> str:
    return json.dumps(plan_node_to_dict(tree.root), indent=2, sort_keys=True)


def _pair_lines(pair: PlanPair) -> list[str]:
    return [
        "AP's plan:",
        _plan_text(pair.ap_plan),
        "TP's plan:",
        _plan_text(pair.tp_plan),
    ]


def _result_line(result: ExecutionResult) -> str:
    return (
        f"{result.winner.value} is faster "
        f"(TP: {result.tp_latency_ms:.2f} ms, AP: {result.ap_latency_ms:.2f} ms)."
    )


def render_knowledge_block(hit: SimilarityHit) -> str:
    entry = hit.entry
    lines = [
        "KNOWLEDGE:",
        "historical query:",
        entry.query_text,
        "historical plan pair:",
        *_pair_lines(entry.plan_details),
        "historical execution result:",
        _result_line(entry.execution_result),
        "historical expert explanation:",
        entry.explanation,
    ]
    return "\n".join(lines)


def render_question_block(question: Question) -> str:
    lines = [
        "QUESTION:",
        "new query:",
        question.query_text,
        "new plan pair:",
        *_pair_lines(question.pair),
    ]
    # pre-execution requests simply omit the result line
    if question.result is not None:
        lines.append("new execution result:")
        lines.append(_result_line(question.result))
    return "\n".join(lines)


def build_prompt(
    question: Question,
    hits: list[SimilarityHit],
    user_context: str | None = None,
) -> PromptBundle:
    """One KNOWLEDGE block per retrieved hit, in retrieval order, then the
    QUESTION, then any user-supplied context."""
    return PromptBundle(
        background=load_template("background.txt"),
        task_description=load_template("task_rag.txt"),
        knowledge_blocks=tuple(render_knowledge_block(h) for h in hits),
        question_block=render_question_block(question),
        user_context=user_context,
    )


def build_baseline_prompt(
    question: Question,
    user_context: str | None = None,
) -> PromptBundle:
    """Same prompt with retrieval stripped out: no KNOWLEDGE blocks and none
    of the retriever sentences in the task text. Plan details are unchanged."""
    return PromptBundle(
        background=load_template("background.txt"),
        task_description=load_template("task_baseline.txt"),
        knowledge_blocks=(),
        question_block=render_question_block(question),
        user_context=user_context,
    )
