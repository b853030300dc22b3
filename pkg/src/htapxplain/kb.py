"""Knowledge base: entries keyed by pair embedding, exact top-K retrieval.

A store is a flat collection of entries, searched by brute-force cosine
similarity (exactness beats cleverness at this scale: tens of entries).
Writers serialize through one lock; readers work on consistent snapshots.
Persistence is a one-line JSON header plus one JSON record per entry.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DimensionError,
    FormatVersionError,
    NotFoundError,
    ParamError,
    StoreIoError,
)
from .plans import (
    ExecutionResult,
    PlanPair,
    pair_from_dict,
    pair_to_dict,
    result_from_dict,
    result_to_dict,
)

KB_FORMAT_VERSION = 1
KEY_DIM = 16


class Provenance(str, Enum):
    EXPERT_SEED = "EXPERT_SEED"
    EXPERT_CORRECTION = "EXPERT_CORRECTION"
    APPROVED_GENERATION = "APPROVED_GENERATION"


@dataclass(frozen=True)
class KnowledgeEntry:
    id: int
    key: np.ndarray
    query_text: str
    plan_details: PlanPair
    execution_result: ExecutionResult
    explanation: str
    provenance: Provenance

    def __post_init__(self):
        key = np.asarray(self.key, dtype=np.float64)
        object.__setattr__(self, "key", key)
        if key.shape != (KEY_DIM,):
            raise DimensionError(f"key must have {KEY_DIM} values, got shape {key.shape}")
        if not np.all(np.isfinite(key)):
            raise ParamError("key must be finite")
        if not self.explanation.strip():
            raise ParamError("explanation must be non-empty")


@dataclass(frozen=True)
class SimilarityHit:
    entry: KnowledgeEntry
    similarity: float


def cosine(v: np.ndarray, w: np.ndarray) -> float:
    """Cosine similarity; zero vectors compare as 0, identical nonzero
    vectors as exactly 1.0 (no float drift on self-similarity)."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise DimensionError(f"vectors have shapes {v.shape} and {w.shape}")
    nv = float(np.linalg.norm(v))
    nw = float(np.linalg.norm(w))
    if nv == 0.0 or nw == 0.0:
        return 0.0
    if np.array_equal(v, w):
        return 1.0
    return float(np.clip(np.dot(v, w) / (nv * nw), -1.0, 1.0))


class KnowledgeStore:
    """In-memory KB with optional write-through persistence."""

    def __init__(self, autosave_path: str | None = None):
        self._entries: dict[int, KnowledgeEntry] = {}
        self._next_id = 1
        self._lock = threading.Lock()
        self.autosave_path = autosave_path
        # (entries sorted by id, stacked keys, row norms); rebuilt after writes
        self._scan_cache: tuple[tuple[KnowledgeEntry, ...], np.ndarray, np.ndarray] | None = None

    # -- reads ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, entry_id: int) -> KnowledgeEntry:
        entry = self._entries.get(entry_id)
        if entry is None:
            raise NotFoundError(f"no entry with id {entry_id}")
        return entry

    def entries(self) -> list[KnowledgeEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.id)

    def top_k(self, query_key: np.ndarray, k: int) -> list[SimilarityHit]:
        if k < 1:
            raise ParamError(f"k must be >= 1, got {k}")
        query = np.asarray(query_key, dtype=np.float64)
        if query.shape != (KEY_DIM,):
            raise DimensionError(f"query key must have {KEY_DIM} values")
        with self._lock:
            if self._scan_cache is None:
                ordered = tuple(sorted(self._entries.values(), key=lambda e: e.id))
                matrix = (np.stack([e.key for e in ordered])
                          if ordered else np.zeros((0, KEY_DIM)))
                self._scan_cache = (ordered, matrix, np.linalg.norm(matrix, axis=1))
            ordered, matrix, norms = self._scan_cache
        if not ordered:
            return []
        query_norm = float(np.linalg.norm(query))
        if query_norm == 0.0:
            sims = np.zeros(len(ordered))
        else:
            denom = norms * query_norm
            sims = np.divide(matrix @ query, np.where(denom > 0.0, denom, 1.0))
            sims[denom == 0.0] = 0.0
            np.clip(sims, -1.0, 1.0, out=sims)
            # bit-equal keys score exactly 1.0, with no float drift
            for i in np.nonzero(sims >= 1.0 - 1e-9)[0]:
                if np.array_equal(matrix[i], query):
                    sims[i] = 1.0
        # rows are id-ascending, so a stable sort settles ties by ascending id
        order = np.argsort(-sims, kind="stable")[:k]
        return [SimilarityHit(ordered[i], float(sims[i])) for i in order]

    # -- writes --------------------------------------------------------------

    def insert(
        self,
        key: np.ndarray,
        query_text: str,
        plan_details: PlanPair,
        execution_result: ExecutionResult,
        explanation: str,
        provenance: Provenance,
    ) -> int:
        with self._lock:
            entry = KnowledgeEntry(
                id=self._next_id,
                key=key,
                query_text=query_text,
                plan_details=plan_details,
                execution_result=execution_result,
                explanation=explanation,
                provenance=Provenance(provenance),
            )
            self._entries[entry.id] = entry
            self._next_id += 1
            self._scan_cache = None
            self._autosave_locked()
            return entry.id

    def replace(
        self, entry_id: int, new_explanation: str, provenance: Provenance
    ) -> KnowledgeEntry:
        with self._lock:
            old = self._entries.get(entry_id)
            if old is None:
                raise NotFoundError(f"no entry with id {entry_id}")
            updated = dataclasses.replace(
                old, explanation=new_explanation, provenance=Provenance(provenance)
            )
            self._entries[entry_id] = updated
            self._scan_cache = None
            self._autosave_locked()
            return updated

    def remove(self, entry_id: int) -> KnowledgeEntry:
        with self._lock:
            entry = self._entries.pop(entry_id, None)
            if entry is None:
                raise NotFoundError(f"no entry with id {entry_id}")
            self._scan_cache = None
            self._autosave_locked()
            return entry

    # -- persistence ---------------------------------------------------------

    def _autosave_locked(self) -> None:
        if self.autosave_path:
            _write_file(self, self.autosave_path)

    def persist(self, path: str) -> None:
        with self._lock:
            _write_file(self, path)


def entry_to_record(entry: KnowledgeEntry) -> dict:
    return {
        "id": entry.id,
        "key": entry.key.tolist(),
        "query_text": entry.query_text,
        "plan_details": pair_to_dict(entry.plan_details),
        "execution_result": result_to_dict(entry.execution_result),
        "explanation": entry.explanation,
        "provenance": entry.provenance.value,
    }


def entry_from_record(record: dict) -> KnowledgeEntry:
    return KnowledgeEntry(
        id=int(record["id"]),
        key=np.asarray(record["key"], dtype=np.float64),
        query_text=record["query_text"],
        plan_details=pair_from_dict(record["plan_details"]),
        execution_result=result_from_dict(record["execution_result"]),
        explanation=record["explanation"],
        provenance=Provenance(record["provenance"]),
    )


def _write_file(store: KnowledgeStore, path: str) -> None:
    header = {"version": KB_FORMAT_VERSION, "dimension": KEY_DIM}
    try:
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".kb.tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(header) + "\n")
                for entry in sorted(store._entries.values(), key=lambda e: e.id):
                    fh.write(json.dumps(entry_to_record(entry), sort_keys=True) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise StoreIoError(f"cannot write knowledge base to {path}: {exc}") from exc


def load_store(path: str, autosave: bool = False) -> KnowledgeStore:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
    except OSError as exc:
        raise StoreIoError(f"cannot read knowledge base from {path}: {exc}") from exc
    if not lines:
        raise FormatVersionError(f"{path} is empty, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatVersionError(f"{path} does not start with a header line") from exc
    if not isinstance(header, dict) or header.get("version") != KB_FORMAT_VERSION:
        raise FormatVersionError(
            f"knowledge base version {header.get('version')!r} != {KB_FORMAT_VERSION}"
            if isinstance(header, dict)
            else f"{path} does not start with a header line"
        )
    if header.get("dimension") != KEY_DIM:
        raise FormatVersionError(
            f"knowledge base dimension {header.get('dimension')!r} != {KEY_DIM}"
        )
    store = KnowledgeStore(autosave_path=path if autosave else None)
    for line in lines[1:]:
        try:
            entry = entry_from_record(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise StoreIoError(f"corrupt knowledge base record in {path}") from exc
        store._entries[entry.id] = entry
    store._next_id = max(store._entries, default=0) + 1
    return store
