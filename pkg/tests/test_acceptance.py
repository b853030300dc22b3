"""Release gate: one test per deliverable contract, at its stated tolerance.

Each test finishes by printing a single PASS line with the measured figure,
so a verbose run doubles as a conformance report. Reference figures that need
a production deployment (live LLM, human judges) are printed beside measured
values by the harness rather than asserted.
"""

import json
import math
import os
import re
import time

import numpy as np
import pytest

from htapxplain import fixtures
from htapxplain.evaluation import format_k_sweep, measure_timings, run_k_sweep
from htapxplain.kb import KnowledgeStore, Provenance
from htapxplain.llm import LlmConfig, MockMode
from htapxplain.pipeline import (
    ExplainRequest,
    ReviewRecord,
    Status,
    Verdict,
    apply_review,
    explain,
)
from htapxplain.plans import Engine, ExecutionResult, PlanNode, PlanPair, PlanTree
from htapxplain.plans import parse_plan, plan_stats, serialize_plan
from htapxplain.prompts import (
    PROHIBITION_SENTENCE,
    Question,
    build_baseline_prompt,
    build_prompt,
    load_template,
)
from htapxplain.router import (
    Featurizer,
    Hyperparams,
    embed_pair,
    gradient_check,
    init_model,
    load_model,
    predict,
    train,
)
from htapxplain.workload import (
    build_dataset,
    demo_query_spec,
    draft_expert_explanation,
    label_example,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def report(label: str, detail: str) -> None:
    print(f"PASS {label}: {detail}")


@pytest.fixture(scope="module")
def reference_model():
    return load_model(os.path.join(DATA_DIR, "reference_router.json"))


@pytest.fixture(scope="module")
def full_dataset():
    """The standard corpus: 400 train, 20 KB seed, 200 held-out test."""
    return build_dataset(seed=1)


def make_store(model, examples):
    store = KnowledgeStore()
    for ex in examples:
        store.insert(
            embed_pair(model, ex.pair),
            ex.pair.query_text or "",
            ex.pair,
            ex.result,
            draft_expert_explanation(ex.pair, ex.result),
            Provenance.EXPERT_SEED,
        )
    return store


@pytest.fixture(scope="module")
def store20(reference_model, full_dataset):
    _, kb_seed, _ = full_dataset
    return make_store(reference_model, kb_seed)


def count_blocks(text: str, label: str) -> int:
    return len(re.findall(rf"^{label}:$", text, flags=re.M))


# --- plan format fidelity ---------------------------------------------------------

def test_plan_format_fidelity():
    started = time.perf_counter()
    expected = {Engine.TP: 9, Engine.AP: 11}
    raw = {
        Engine.TP: json.dumps(fixtures.DEMO_TP_PLAN),
        Engine.AP: json.dumps(fixtures.DEMO_AP_PLAN),
    }
    for engine, text in raw.items():
        tree = parse_plan(text, engine)
        assert plan_stats(tree).node_count == expected[engine]
        wire = serialize_plan(tree)
        again = parse_plan(wire, engine)
        assert again == tree
        assert serialize_plan(again) == wire
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    report("plan format fidelity",
           f"9 TP / 11 AP nodes, byte-stable round trip in {elapsed * 1000:.0f} ms")


# --- embedding contract ------------------------------------------------------------

def test_embedding_contract(reference_model, full_dataset):
    _, kb_seed, test_set = full_dataset
    corpus = kb_seed + test_set
    assert len(corpus) == 220
    for ex in corpus:
        first = embed_pair(reference_model, ex.pair)
        second = embed_pair(reference_model, ex.pair)
        assert first.shape == (16,)
        assert first.tobytes() == second.tobytes()
    report("embedding contract",
           f"length 16 and bitwise-stable across {len(corpus)} queries")


def test_reference_model_golden_embedding(reference_model):
    with open(os.path.join(DATA_DIR, "golden_embedding.json"), encoding="utf-8") as fh:
        golden = json.load(fh)
    vector = embed_pair(reference_model, fixtures.demo_pair())
    assert np.allclose(vector, golden["embedding"], atol=1e-9, rtol=0.0)
    winner, _ = predict(reference_model, fixtures.demo_pair())
    assert winner.value == golden["predicted_winner"] == "AP"
    report("golden embedding",
           "demo pair reproduces the committed vector to 1e-9, winner AP")


# --- model size ----------------------------------------------------------------------

def test_model_size(tmp_path):
    committed = os.path.getsize(os.path.join(DATA_DIR, "reference_router.json"))
    from htapxplain.router import save_model

    fresh = tmp_path / "fresh.json"
    save_model(init_model(seed=0), fresh)
    assert committed < 1_048_576
    assert os.path.getsize(fresh) < 1_048_576
    report("model size", f"{committed:,} bytes persisted (< 1,048,576)")


# --- gradient correctness ---------------------------------------------------------------

TINY_FEATURIZER = Featurizer(
    node_types=("Table Scan", "Inner hash join"),
    tables=("t1", "t2"),
    cost_log_scale=1.0,
    rows_log_scale=1.0,
)


def tiny_example(seed: int):
    def scan(table, cost, rows):
        return PlanNode("Table Scan", relation_name=table,
                        total_cost=cost, plan_rows=rows)

    def tree(engine, shift):
        root = PlanNode(
            "Inner hash join",
            total_cost=3.0 + shift,
            plan_rows=5,
            children=(scan("t1", 1.0 + shift, 100), scan("t2", 2.0, 50)),
        )
        return PlanTree(root, engine)

    shift = 0.25 * seed
    pair = PlanPair(ap_plan=tree(Engine.AP, shift), tp_plan=tree(Engine.TP, shift / 2))
    winner_ap = seed % 2 == 0
    tp, ap = (9.0, 1.0) if winner_ap else (1.0, 9.0)
    return pair, ExecutionResult.from_latencies(tp_latency_ms=tp, ap_latency_ms=ap)


def test_gradient_correctness():
    started = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        model = init_model(TINY_FEATURIZER, seed=seed)
        worst = max(worst, gradient_check(model, tiny_example(seed)))
    elapsed = time.perf_counter() - started
    assert worst < 1e-4
    assert elapsed < 60.0
    report("gradient correctness",
           f"max relative error {worst:.2e} over 20 seeded models "
           f"in {elapsed:.1f} s")


# --- router quality ---------------------------------------------------------------------

def test_router_quality(full_dataset):
    train_set, _, test_set = full_dataset
    started = time.perf_counter()
    _, result = train(
        [(ex.pair, ex.result) for ex in train_set],
        Hyperparams(),
        holdout=[(ex.pair, ex.result) for ex in test_set],
    )
    elapsed = time.perf_counter() - started
    assert len(test_set) == 200
    assert result.final_accuracy >= 0.90
    assert elapsed < 120.0
    report("router quality",
           f"held-out accuracy {result.final_accuracy:.3f} on 200 queries, "
           f"trained in {elapsed:.1f} s")


# --- retrieval exactness ----------------------------------------------------------------

def oracle_top_k(entries, query, k):
    def cos(a, b):
        dot = sum(x * y for x, y in zip(a, b))
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(y * y for y in b))
        return dot / (na * nb) if na > 0.0 and nb > 0.0 else 0.0

    scored = sorted(
        ((cos(e.key.tolist(), query.tolist()), e.id) for e in entries),
        key=lambda t: (-t[0], t[1]),
    )
    return [entry_id for _, entry_id in scored[:k]]


def test_retrieval_exactness():
    pair, result = fixtures.demo_pair(), fixtures.demo_result()
    mismatches = 0
    for store_seed in range(100):
        rng = np.random.RandomState(store_seed)
        store = KnowledgeStore()
        for _ in range(20):
            store.insert(rng.standard_normal(16), "q", pair, result,
                         "AP is faster here.", Provenance.EXPERT_SEED)
        query = rng.standard_normal(16)
        for k in range(1, 6):
            got = [hit.entry.id for hit in store.top_k(query, k)]
            want = oracle_top_k(store.entries(), query, k)
            if got != want:
                mismatches += 1
    assert mismatches == 0
    report("retrieval exactness",
           "top_k matched the exhaustive oracle on 100 stores x k in 1..5")


# --- timing budgets ---------------------------------------------------------------------

def test_timing_budgets(reference_model, store20):
    timing = measure_timings(reference_model, store20, n_requests=1200)
    assert timing.n_requests - timing.n_requests // 10 >= 1000
    assert timing.encode_mean_ms <= 1.0
    assert timing.search_mean_ms <= 1.0
    target = "met" if timing.search_mean_ms <= 0.1 else "missed"
    report("timing budgets",
           f"embed {timing.encode_mean_ms:.3f} ms, top_k on 20 entries "
           f"{timing.search_mean_ms:.4f} ms (0.1 ms target {target})")


# --- prompt bit-exactness ----------------------------------------------------------------

def test_prompt_bit_exactness(reference_model, store20):
    question = Question(
        fixtures.DEMO_QUERY_SQL, fixtures.demo_pair(), fixtures.demo_result()
    )
    hits = store20.top_k(embed_pair(reference_model, fixtures.demo_pair()), 3)
    rag = build_prompt(question, hits).render()
    assert load_template("background.txt") in rag
    assert load_template("task_rag.txt") in rag
    assert PROHIBITION_SENTENCE in rag
    assert count_blocks(rag, "KNOWLEDGE") == 3
    assert count_blocks(rag, "QUESTION") == 1

    baseline = build_baseline_prompt(question).render()
    assert load_template("background.txt") in baseline
    assert load_template("task_baseline.txt") in baseline
    assert count_blocks(baseline, "KNOWLEDGE") == 0
    assert count_blocks(baseline, "QUESTION") == 1
    report("prompt bit-exactness",
           "templates verbatim; 3 KNOWLEDGE + 1 QUESTION; baseline has 0")


# --- None fallback ------------------------------------------------------------------------

def test_none_fallback(reference_model, full_dataset):
    _, kb_seed, _ = full_dataset
    store = make_store(reference_model, kb_seed)
    before = [(e.id, e.explanation) for e in store.entries()]
    request = ExplainRequest(
        query_text=fixtures.DEMO_QUERY_SQL,
        pair=fixtures.demo_pair(),
        result=fixtures.demo_result(),
    )
    outcome = explain(request, reference_model, store,
                      LlmConfig(mock_mode=MockMode.NONE))
    assert outcome.status is Status.NONE_RESPONSE
    assert outcome.explanation is None
    assert [(e.id, e.explanation) for e in store.entries()] == before
    report("None fallback", "NONE_RESPONSE surfaced and the KB stayed untouched")


# --- feedback loop -------------------------------------------------------------------------

def test_feedback_loop(reference_model, full_dataset):
    _, kb_seed, _ = full_dataset
    store = make_store(reference_model, kb_seed)
    request = ExplainRequest(
        query_text=fixtures.DEMO_QUERY_SQL,
        pair=fixtures.demo_pair(),
        result=fixtures.demo_result(),
    )
    first = explain(request, reference_model, store, LlmConfig())
    assert first.status is Status.EXPLAINED
    entry_id = apply_review(
        store,
        ReviewRecord(verdict=Verdict.INCORRECT, reviewer="gate",
                     corrected_text="AP is faster; the phone filter defeats "
                                    "the row-store index."),
        first,
    )
    second = explain(request, reference_model, store, LlmConfig())
    top_id, top_sim = second.retrieved[0]
    assert top_id == entry_id
    assert top_sim == 1.0
    report("feedback loop",
           f"corrected entry {entry_id} returned at rank 1, similarity 1.0")


# --- K-sweep plumbing -----------------------------------------------------------------------

def test_k_sweep_plumbing(reference_model, store20, full_dataset):
    _, _, test_set = full_dataset
    started = time.perf_counter()
    sweep = run_k_sweep(
        [(ex.pair, ex.result) for ex in test_set],
        reference_model, store20, LlmConfig(),
    )
    elapsed = time.perf_counter() - started
    assert [row.k for row in sweep.rows] == [1, 2, 3, 4, 5]
    assert all(row.n_queries == 200 for row in sweep.rows)
    assert elapsed < 60.0
    table = format_k_sweep(sweep)
    for reference in ("0.85", "0.89-0.91", "0.080", "0.035"):
        assert reference in table
    report("K-sweep plumbing",
           f"5 rows x 200 queries in {elapsed:.1f} s, reference values printed")


# --- oracle calibration ----------------------------------------------------------------------

def test_oracle_calibration():
    example = label_example(demo_query_spec())
    ratio = example.result.tp_latency_ms / example.result.ap_latency_ms
    assert example.result.winner is Engine.AP
    assert ratio >= 5.0
    report("oracle calibration",
           f"TP/AP latency ratio {ratio:.1f} with AP the winner")
