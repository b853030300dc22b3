"""Desk-scale evaluation harness: K-sweeps, verdict scoring, timing budgets.

The headline quality numbers for this kind of system came from a production
deployment with a live LLM and human expert judging. Those are not
reproducible offline, so reports print them as reference columns next to
whatever the local (usually mock) provider actually measured.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from . import fixtures
from .errors import LabelMismatchError, ParamError
from .kb import KnowledgeStore
from .llm import LlmClient, LlmConfig
from .pipeline import ExplainRequest, ExplanationResult, Status, explain
from .plans import ExecutionResult, PlanPair, pair_to_dict
from .router import RouterModel, embed_pair

# Reference figures from the production deployment (human-judged, live LLM):
# per-K accuracy bands and None-response rates, plus component timing budgets.
REFERENCE_PER_K: dict[int, tuple[float, float, float]] = {
    1: (0.85, 0.85, 0.08),
    2: (0.89, 0.91, 0.035),
    3: (0.89, 0.91, 0.035),
    4: (0.89, 0.91, 0.035),
    5: (0.89, 0.91, 0.035),
}
REFERENCE_OVERALL_ACCURACY = 0.91
REFERENCE_TIMINGS_MS = {
    "encode_ms": 1.0,          # per-pair model inference budget
    "search_ms": 0.1,          # KB scan at deployed size
    "llm_think_ms": 2_000.0,   # provider reasoning phase, upper bound
    "llm_generate_ms": 10_000.0,  # typical generation wall time
}


def winner_mention_judge(explanation: str, truth: ExecutionResult) -> bool:
    """Desk-scale stand-in for an expert: the explanation must name the actual
    winner. The mock echo provider passes this exactly when the pipeline fed
    it the right context."""
    return f"{truth.winner.value} is faster" in explanation


@dataclass(frozen=True)
class KRow:
    k: int
    n_queries: int
    accuracy: float
    none_rate: float
    error_rate: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[KRow, ...]
    provider: str
    dataset_fingerprint: str


@dataclass(frozen=True)
class TimingReport:
    encode_mean_ms: float
    encode_p95_ms: float
    search_mean_ms: float
    search_p95_ms: float
    llm_think_ms: float
    llm_generate_ms: float
    kb_size: int
    n_requests: int


def dataset_fingerprint(test_set: Sequence[tuple[PlanPair, ExecutionResult]]) -> str:
    digest = hashlib.sha256()
    for pair, result in test_set:
        record = {
            "pair": pair_to_dict(pair),
            "tp_latency_ms": result.tp_latency_ms,
            "ap_latency_ms": result.ap_latency_ms,
        }
        digest.update(json.dumps(record, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def score(
    results: Sequence[ExplanationResult], verdicts: Sequence[bool]
) -> tuple[float, float, float]:
    """(accuracy, none_rate, error_rate) from one verdict per EXPLAINED result.

    Accuracy is over non-ERROR results; None responses count against it and
    into none_rate; both rates are over all results."""
    explained = [r for r in results if r.status is Status.EXPLAINED]
    if len(explained) != len(verdicts):
        raise LabelMismatchError(
            f"{len(explained)} EXPLAINED results but {len(verdicts)} verdicts"
        )
    total = len(results)
    if total == 0:
        raise ParamError("no results to score")
    errors = sum(r.status is Status.ERROR for r in results)
    nones = sum(r.status is Status.NONE_RESPONSE for r in results)
    non_error = total - errors
    correct = sum(bool(v) for v in verdicts)
    accuracy = correct / non_error if non_error else 0.0
    return accuracy, nones / total, errors / total


def run_k_sweep(
    test_set: Sequence[tuple[PlanPair, ExecutionResult]],
    model: RouterModel,
    store: KnowledgeStore,
    llm_config: LlmConfig,
    k_range: Sequence[int] = (1, 2, 3, 4, 5),
    judge: Callable[[str, ExecutionResult], bool] = winner_mention_judge,
) -> EvalReport:
    """Run explain for every test query at each K and score with ``judge``.

    Provider errors are counted per row, never fatal."""
    if not test_set:
        raise ParamError("k-sweep needs a non-empty test set")
    if any(k < 1 for k in k_range):
        raise ParamError("k values must be >= 1")
    client = LlmClient(llm_config)
    rows = []
    for k in k_range:
        results = []
        verdicts = []
        for pair, result in test_set:
            request = ExplainRequest(
                query_text=pair.query_text or "(query text unavailable)",
                pair=pair,
                result=result,
                k=k,
            )
            res = explain(request, model, store, client)
            results.append(res)
            if res.status is Status.EXPLAINED:
                verdicts.append(judge(res.explanation, result))
        accuracy, none_rate, error_rate = score(results, verdicts)
        rows.append(KRow(k, len(test_set), accuracy, none_rate, error_rate))
    return EvalReport(
        rows=tuple(rows),
        provider=llm_config.provider.value,
        dataset_fingerprint=dataset_fingerprint(test_set),
    )


def _p95(samples: list[float]) -> float:
    ordered = sorted(samples)
    index = max(0, -(-len(ordered) * 95 // 100) - 1)
    return ordered[index]


def measure_timings(
    model: RouterModel,
    store: KnowledgeStore,
    n_requests: int = 1000,
    pair: PlanPair | None = None,
    k: int = 2,
    recent: Sequence[ExplanationResult] | None = None,
) -> TimingReport:
    """Wall-clock embed and search in isolation, single-threaded, discarding
    the first 10% of calls as warm-up. LLM columns are averaged from recent
    results when given, otherwise zero."""
    if n_requests < 1:
        raise ParamError("n_requests must be >= 1")
    if pair is None:
        pair = fixtures.demo_pair()
    warmup = n_requests // 10
    encode_ms: list[float] = []
    search_ms: list[float] = []
    for i in range(warmup + n_requests):
        t0 = time.perf_counter()
        key = embed_pair(model, pair)
        t1 = time.perf_counter()
        store.top_k(key, k)  # an empty store still measures the 0-entry scan
        t2 = time.perf_counter()
        if i >= warmup:
            encode_ms.append((t1 - t0) * 1e3)
            search_ms.append((t2 - t1) * 1e3)
    think = generate = 0.0
    if recent:
        think = statistics.fmean(r.timings.llm_think_ms for r in recent)
        generate = statistics.fmean(r.timings.llm_generate_ms for r in recent)
    return TimingReport(
        encode_mean_ms=statistics.fmean(encode_ms),
        encode_p95_ms=_p95(encode_ms),
        search_mean_ms=statistics.fmean(search_ms),
        search_p95_ms=_p95(search_ms),
        llm_think_ms=think,
        llm_generate_ms=generate,
        kb_size=len(store),
        n_requests=n_requests,
    )


def format_k_sweep(report: EvalReport) -> str:
    """Human-readable table, measured columns beside the production reference."""
    lines = [
        f"provider: {report.provider}   dataset: {report.dataset_fingerprint[:12]}",
        f"{'k':>2}  {'queries':>7}  {'accuracy':>8}  {'none_rate':>9}  "
        f"{'error_rate':>10}  {'ref_accuracy':>12}  {'ref_none':>8}",
    ]
    for row in report.rows:
        ref = REFERENCE_PER_K.get(row.k)
        if ref is None:
            ref_acc, ref_none = "-", "-"
        else:
            lo, hi, none = ref
            ref_acc = f"{lo:.2f}" if lo == hi else f"{lo:.2f}-{hi:.2f}"
            ref_none = f"{none:.3f}"
        lines.append(
            f"{row.k:>2}  {row.n_queries:>7}  {row.accuracy:>8.3f}  "
            f"{row.none_rate:>9.3f}  {row.error_rate:>10.3f}  "
            f"{ref_acc:>12}  {ref_none:>8}"
        )
    lines.append(
        "reference columns: production deployment with a live LLM and expert "
        "judging (not reproducible offline)"
    )
    return "\n".join(lines)


def format_timings(report: TimingReport) -> str:
    budget = REFERENCE_TIMINGS_MS
    return "\n".join([
        f"kb_size: {report.kb_size}   requests: {report.n_requests}",
        f"{'component':<16} {'mean_ms':>10} {'p95_ms':>10} {'reference_ms':>13}",
        f"{'encode':<16} {report.encode_mean_ms:>10.4f} {report.encode_p95_ms:>10.4f}"
        f" {budget['encode_ms']:>13.1f}",
        f"{'search':<16} {report.search_mean_ms:>10.4f} {report.search_p95_ms:>10.4f}"
        f" {budget['search_ms']:>13.1f}",
        f"{'llm_think':<16} {report.llm_think_ms:>10.4f} {'-':>10}"
        f" {budget['llm_think_ms']:>13.1f}",
        f"{'llm_generate':<16} {report.llm_generate_ms:>10.4f} {'-':>10}"
        f" {budget['llm_generate_ms']:>13.1f}",
    ])


def report_to_records(report: EvalReport) -> list[dict]:
    records = []
    for row in report.rows:
        ref = REFERENCE_PER_K.get(row.k)
        records.append({
            "k": row.k,
            "n_queries": row.n_queries,
            "accuracy": row.accuracy,
            "none_rate": row.none_rate,
            "error_rate": row.error_rate,
            "reference_accuracy_range": list(ref[:2]) if ref else None,
            "reference_none_rate": ref[2] if ref else None,
            "provider": report.provider,
            "dataset_fingerprint": report.dataset_fingerprint,
        })
    return records
