"""HTTP surface for the explanation pipeline.

All bodies are JSON mirroring the module types field for field. Explanation
results live in an in-memory cache with stable ids so reviews and follow-ups
can reference them; the knowledge base itself is write-through persistent.
"""

from __future__ import annotations

import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import Body, FastAPI, Query
from fastapi.responses import JSONResponse

from .errors import (
    BindError,
    HtapxplainError,
    LoadError,
    NotFoundError,
    ParamError,
    StateError,
)
from .kb import KnowledgeStore, Provenance, entry_to_record, load_store
from .llm import LlmClient, LlmConfig
from .pipeline import (
    ExplainRequest,
    ExplainSession,
    ExplanationResult,
    ReviewRecord,
    Verdict,
    apply_review,
    explain,
    followup,
    result_to_wire,
)
from .plans import pair_from_dict, result_from_dict
from .router import MODEL_FORMAT_VERSION, RouterModel, embed_pair, load_model

DEFAULT_RESULT_TTL_S = 24 * 3600.0

_HTTP_STATUS_BY_CODE = {
    "E_NOT_FOUND": 404,
    "E_STATE": 409,
    "E_PARAM": 400,
    "E_SCHEMA": 400,
    "E_SYNTAX": 400,
    "E_ARITY": 400,
    "E_MISMATCH": 400,
    "E_VOCAB": 400,
    "E_DIM": 400,
    "E_BALANCE": 400,
    "E_LABELS": 400,
}


@dataclass
class ServiceConfig:
    model_path: str
    kb_path: str
    host: str = "127.0.0.1"
    port: int = 8000
    default_k: int = 2
    llm: LlmConfig = field(default_factory=LlmConfig)
    result_ttl_s: float = DEFAULT_RESULT_TTL_S
    parallelism: int = 8

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ParamError(f"port {self.port} is out of range")
        if self.default_k < 1:
            raise ParamError("default_k must be >= 1")
        if self.result_ttl_s <= 0:
            raise ParamError("result_ttl_s must be positive")
        if self.parallelism < 1:
            raise ParamError("parallelism must be >= 1")


@dataclass
class _CachedResult:
    result: ExplanationResult
    expires_at: float
    session: ExplainSession | None = None
    review_state: str = "AWAITING_REVIEW"


class ResultCache:
    """Monotonic string ids for recent results, with TTL eviction."""

    def __init__(self, ttl_s: float = DEFAULT_RESULT_TTL_S):
        self._ttl_s = ttl_s
        self._lock = threading.Lock()
        self._items: dict[str, _CachedResult] = {}
        self._counter = 0

    def put(self, result: ExplanationResult) -> str:
        with self._lock:
            self._evict_locked()
            self._counter += 1
            rid = f"r-{self._counter}"
            self._items[rid] = _CachedResult(result, time.monotonic() + self._ttl_s)
            return rid

    def get(self, result_id: str) -> _CachedResult:
        with self._lock:
            self._evict_locked()
            item = self._items.get(result_id)
            if item is None:
                raise NotFoundError(f"no cached result {result_id}")
            return item

    def _evict_locked(self) -> None:
        now = time.monotonic()
        for rid in [r for r, item in self._items.items() if item.expires_at <= now]:
            del self._items[rid]


def build_app(
    model: RouterModel,
    store: KnowledgeStore,
    llm_config: LlmConfig | None = None,
    default_k: int = 2,
    result_ttl_s: float = DEFAULT_RESULT_TTL_S,
    kb_flush_path: str | None = None,
) -> FastAPI:
    """App over already-loaded components; tests drive this directly."""
    llm_config = llm_config or LlmConfig()
    client = LlmClient(llm_config)
    cache = ResultCache(result_ttl_s)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        if kb_flush_path:
            store.persist(kb_flush_path)

    app = FastAPI(title="htapxplain", docs_url=None, redoc_url=None, lifespan=lifespan)

    @app.exception_handler(HtapxplainError)
    async def handle_package_error(_, exc: HtapxplainError):
        status = _HTTP_STATUS_BY_CODE.get(exc.code.split("(")[0], 500)
        return JSONResponse(status_code=status,
                            content={"error": exc.code, "detail": str(exc)})

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "kb_size": len(store),
            "model_version": MODEL_FORMAT_VERSION,
        }

    @app.post("/api/explain")
    def explain_endpoint(payload: dict = Body(...)) -> dict:
        if "plan_pair" not in payload:
            raise ParamError("explain request needs a plan_pair")
        pair = pair_from_dict(payload["plan_pair"], warn_unknown=False)
        result = (
            result_from_dict(payload["execution_result"])
            if payload.get("execution_result") else None
        )
        request = ExplainRequest(
            query_text=payload.get("query_text") or pair.query_text
            or "(query text unavailable)",
            pair=pair,
            result=result,
            user_context=payload.get("user_context"),
            k=int(payload.get("k", default_k)),
            baseline=bool(payload.get("baseline", False)),
        )
        res = explain(request, model, store, client)
        body = result_to_wire(res)
        body["result_id"] = cache.put(res)
        return body

    @app.post("/api/followup")
    def followup_endpoint(payload: dict = Body(...)) -> dict:
        rid = payload.get("result_id")
        question = payload.get("question", "")
        if not rid:
            raise ParamError("followup needs a result_id")
        cached = cache.get(rid)
        if cached.session is None:
            cached.session = ExplainSession.from_result(cached.result)
        answer = followup(cached.session, question, client)
        return {
            "result_id": rid,
            "answer": answer,
            "transcript": list(cached.session.transcript),
        }

    @app.get("/api/kb")
    def list_kb(offset: int = Query(0, ge=0), limit: int = Query(50, ge=1, le=500)) -> dict:
        entries = store.entries()
        page = entries[offset:offset + limit]
        return {
            "total": len(entries),
            "offset": offset,
            "entries": [entry_to_record(e) for e in page],
        }

    @app.post("/api/kb")
    def insert_kb(payload: dict = Body(...)) -> dict:
        for key in ("key", "plan_details", "execution_result", "explanation"):
            if key not in payload:
                raise ParamError(f"kb insert needs {key}")
        entry_id = store.insert(
            key=payload["key"],
            query_text=payload.get("query_text", ""),
            plan_details=pair_from_dict(payload["plan_details"], warn_unknown=False),
            execution_result=result_from_dict(payload["execution_result"]),
            explanation=payload["explanation"],
            provenance=Provenance(payload.get("provenance", "EXPERT_SEED")),
        )
        return {"id": entry_id, "kb_size": len(store)}

    @app.post("/api/review")
    def review_endpoint(payload: dict = Body(...)) -> dict:
        rid = payload.get("result_id")
        if not rid:
            raise ParamError("review needs a result_id")
        cached = cache.get(rid)
        if cached.review_state in ("APPROVED", "CORRECTED"):
            raise StateError(f"result {rid} was already reviewed")
        review = ReviewRecord(
            verdict=Verdict(payload.get("verdict", "")),
            reviewer=payload.get("reviewer", "anonymous"),
            corrected_text=payload.get("corrected_text"),
            result_id=rid,
        )
        entry_id = apply_review(store, review, cached.result)
        cached.review_state = (
            "CORRECTED" if review.verdict is Verdict.INCORRECT else "APPROVED"
        )
        return {
            "entry_id": entry_id,
            "review_state": cached.review_state,
            "kb_size": len(store),
        }

    @app.api_route("/api/retrieve", methods=["GET", "POST"])
    def retrieve_endpoint(payload: dict = Body(...), k: int = Query(None, ge=1)) -> dict:
        if "plan_pair" not in payload:
            raise ParamError("retrieve needs a plan_pair")
        pair = pair_from_dict(payload["plan_pair"], warn_unknown=False)
        depth = k if k is not None else int(payload.get("k", default_k))
        hits = store.top_k(embed_pair(model, pair), depth)
        return {
            "k": depth,
            "hits": [
                {
                    "entry_id": h.entry.id,
                    "similarity": h.similarity,
                    "query_text": h.entry.query_text,
                    "explanation": h.entry.explanation,
                    "winner": h.entry.execution_result.winner.value,
                    "provenance": h.entry.provenance.value,
                }
                for h in hits
            ],
        }

    return app


def create_app(config: ServiceConfig) -> FastAPI:
    """Load model and KB from disk and build the app; load failures are E_LOAD."""
    try:
        model = load_model(config.model_path)
    except (OSError, HtapxplainError) as exc:
        raise LoadError(f"cannot load router model: {exc}") from exc
    try:
        store = load_store(config.kb_path, autosave=True)
    except HtapxplainError as exc:
        raise LoadError(f"cannot load knowledge base: {exc}") from exc
    return build_app(
        model,
        store,
        llm_config=config.llm,
        default_k=config.default_k,
        result_ttl_s=config.result_ttl_s,
        kb_flush_path=config.kb_path,
    )


def serve(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    try:
        uvicorn.run(
            app,
            host=config.host,
            port=config.port,
            limit_concurrency=config.parallelism,
            log_level="warning",
        )
    except OSError as exc:
        raise BindError(f"cannot bind {config.host}:{config.port}: {exc}") from exc
