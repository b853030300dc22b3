import pytest

import htapxplain.evaluation as evaluation
from htapxplain import fixtures
from htapxplain.errors import LabelMismatchError, LlmTimeoutError, ParamError
from htapxplain.evaluation import (
    REFERENCE_PER_K,
    EvalReport,
    TimingReport,
    format_k_sweep,
    format_timings,
    measure_timings,
    report_to_records,
    run_k_sweep,
    score,
    winner_mention_judge,
)
from htapxplain.kb import KnowledgeStore, Provenance
from htapxplain.llm import LlmConfig, MockMode
from htapxplain.pipeline import ExplanationResult, Status, Timings
from htapxplain.plans import ExecutionResult
from htapxplain.router import embed_pair, init_model
from htapxplain.workload import build_dataset, draft_expert_explanation

MODEL = init_model(seed=0)


@pytest.fixture(scope="module")
def small_eval_setup():
    _, kb_seed, test = build_dataset(n_train=40, n_kb=10, n_test=20, seed=3)
    store = KnowledgeStore()
    for ex in kb_seed:
        store.insert(
            embed_pair(MODEL, ex.pair),
            ex.pair.query_text or "",
            ex.pair,
            ex.result,
            draft_expert_explanation(ex.pair, ex.result),
            Provenance.EXPERT_SEED,
        )
    return store, [(ex.pair, ex.result) for ex in test]


def fake_result(status, explanation=None):
    return ExplanationResult(
        status=status,
        explanation=explanation,
        retrieved=(),
        timings=Timings(0.1, 0.1, 0.0, 2.0),
        prompt_fingerprint="f" * 64,
        error="E_TIMEOUT: x" if status is Status.ERROR else None,
    )


class AlwaysTimeoutClient:
    def __init__(self, config):
        self.config = config

    def complete(self, prompt):
        raise LlmTimeoutError("down")


# --- scoring -------------------------------------------------------------------

def test_score_headline_fractions():
    results = [fake_result(Status.EXPLAINED, "text")] * 193
    results += [fake_result(Status.NONE_RESPONSE)] * 7
    verdicts = [True] * 182 + [False] * 11
    accuracy, none_rate, error_rate = score(results, verdicts)
    assert accuracy == pytest.approx(0.91)
    assert none_rate == pytest.approx(0.035)
    assert error_rate == 0.0


def test_score_all_none():
    results = [fake_result(Status.NONE_RESPONSE)] * 10
    assert score(results, []) == (0.0, 1.0, 0.0)


def test_score_errors_shrink_the_denominator():
    results = [fake_result(Status.EXPLAINED, "t")] * 8 + [fake_result(Status.ERROR)] * 2
    accuracy, none_rate, error_rate = score(results, [True] * 4 + [False] * 4)
    assert accuracy == pytest.approx(0.5)
    assert error_rate == pytest.approx(0.2)
    assert none_rate == 0.0


def test_score_label_count_must_match():
    results = [fake_result(Status.EXPLAINED, "t")] * 3
    with pytest.raises(LabelMismatchError):
        score(results, [True, False])


def test_score_rejects_empty():
    with pytest.raises(ParamError):
        score([], [])


def test_winner_mention_judge():
    truth = ExecutionResult.from_latencies(tp_latency_ms=100.0, ap_latency_ms=10.0)
    assert winner_mention_judge("AP is faster thanks to column pruning", truth)
    assert not winner_mention_judge("TP is faster here", truth)


# --- k-sweep --------------------------------------------------------------------

def test_sweep_shape_and_echo_accuracy(small_eval_setup):
    store, test_set = small_eval_setup
    report = run_k_sweep(test_set, MODEL, store, LlmConfig())
    assert [row.k for row in report.rows] == [1, 2, 3, 4, 5]
    for row in report.rows:
        assert row.n_queries == len(test_set)
        assert row.accuracy == 1.0
        assert row.none_rate == 0.0
        assert row.error_rate == 0.0
    assert report.provider == "MOCK"


def test_sweep_is_deterministic(small_eval_setup):
    store, test_set = small_eval_setup
    first = run_k_sweep(test_set, MODEL, store, LlmConfig(), k_range=(1, 2))
    second = run_k_sweep(test_set, MODEL, store, LlmConfig(), k_range=(1, 2))
    assert first == second


def test_thin_retrieval_raises_the_none_rate(small_eval_setup):
    store, test_set = small_eval_setup
    config = LlmConfig(mock_mode=MockMode.NONE_BELOW_K, mock_min_knowledge=2)
    report = run_k_sweep(test_set, MODEL, store, config, k_range=(1, 2))
    assert report.rows[0].none_rate > report.rows[1].none_rate


def test_sweep_counts_provider_failures(small_eval_setup, monkeypatch):
    store, test_set = small_eval_setup
    monkeypatch.setattr(evaluation, "LlmClient", AlwaysTimeoutClient)
    report = run_k_sweep(test_set[:5], MODEL, store, LlmConfig(), k_range=(2,))
    row = report.rows[0]
    assert row.error_rate == 1.0
    assert row.accuracy == 0.0


def test_sweep_validates_inputs(small_eval_setup):
    store, test_set = small_eval_setup
    with pytest.raises(ParamError):
        run_k_sweep([], MODEL, store, LlmConfig())
    with pytest.raises(ParamError):
        run_k_sweep(test_set, MODEL, store, LlmConfig(), k_range=(0,))


# --- timing measurement -------------------------------------------------------------

def test_measure_timings_fields(small_eval_setup):
    store, _ = small_eval_setup
    report = measure_timings(MODEL, store, n_requests=60)
    assert report.n_requests == 60
    assert report.kb_size == len(store)
    assert 0.0 < report.encode_mean_ms <= report.encode_p95_ms
    assert 0.0 < report.search_mean_ms <= report.search_p95_ms
    assert report.llm_think_ms == 0.0


def test_measure_timings_empty_store_is_near_zero():
    report = measure_timings(MODEL, KnowledgeStore(), n_requests=40)
    assert report.kb_size == 0
    assert report.search_mean_ms < 0.1


def test_measure_timings_averages_recent_llm_results(small_eval_setup):
    store, _ = small_eval_setup
    recent = [fake_result(Status.EXPLAINED, "t")] * 4
    report = measure_timings(MODEL, store, n_requests=20, recent=recent)
    assert report.llm_generate_ms == pytest.approx(2.0)


def test_measure_timings_validates_n():
    with pytest.raises(ParamError):
        measure_timings(MODEL, KnowledgeStore(), n_requests=0)


# --- report formatting -----------------------------------------------------------------

def test_k_sweep_table_prints_reference_columns(small_eval_setup):
    store, test_set = small_eval_setup
    report = run_k_sweep(test_set[:4], MODEL, store, LlmConfig(), k_range=(1, 2))
    text = format_k_sweep(report)
    assert "ref_accuracy" in text and "ref_none" in text
    assert "0.85" in text          # reference accuracy at k=1
    assert "0.89-0.91" in text     # reference band at k=2
    assert "0.080" in text and "0.035" in text
    assert "not reproducible offline" in text


def test_timing_table_prints_budgets(small_eval_setup):
    store, _ = small_eval_setup
    text = format_timings(measure_timings(MODEL, store, n_requests=20))
    assert "reference_ms" in text
    for budget in ("1.0", "0.1", "2000.0", "10000.0"):
        assert budget in text


def test_records_are_line_writable(small_eval_setup):
    store, test_set = small_eval_setup
    report = run_k_sweep(test_set[:4], MODEL, store, LlmConfig(), k_range=(1, 2))
    records = report_to_records(report)
    assert len(records) == 2
    assert records[0]["reference_accuracy_range"] == list(REFERENCE_PER_K[1][:2])
    assert records[0]["dataset_fingerprint"] == report.dataset_fingerprint
