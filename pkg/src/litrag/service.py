"""HTTP service: ingestion, one-shot query, and multi-turn chat sessions.

State durability is split by kind: the corpus JSONL file is the source of
truth for text and metadata (appended on ingest), the index snapshot holds
vectors (rewritten after each successful ingest batch), and each chat
session is an append-only JSONL transcript under the session store
directory. Restart recovers all three.

All bodies are UTF-8 JSON; errors use {"error": {"code", "message"}}.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .corpus import corpus_line, parse_corpus_line
from .errors import BudgetTooSmall, EmptyDocument, EndpointUnavailable, ModelError
from .index import RetrievalConfig
from .rag import Answer, GenerationConfig, RagEngine


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    corpus_path: str = "data/corpus.jsonl"
    snapshot_path: str = "data/index.snap"
    session_store_path: str = "data/sessions"

    @classmethod
    def from_settings(cls, settings: dict[str, Any]) -> "ServiceConfig":
        return cls(
            host=str(settings.get("host", cls.host)),
            port=int(settings.get("port", cls.port)),
            corpus_path=str(settings.get("corpus_path", cls.corpus_path)),
            snapshot_path=str(settings.get("snapshot_path", cls.snapshot_path)),
            session_store_path=str(settings.get("session_store_path", cls.session_store_path)),
        )


class ChatSession:
    """Append-only transcript. Turns are (question, answer-dict, timestamp)."""

    def __init__(self, session_id: str, created_at: float):
        self.session_id = session_id
        self.created_at = created_at
        self.turns: list[tuple[str, dict, float]] = []

    def append(self, question: str, answer: dict, ts: float) -> None:
        if self.turns and ts < self.turns[-1][2]:
            ts = self.turns[-1][2]
        self.turns.append((question, answer, ts))

    def pairs(self) -> list[tuple[str, str]]:
        return [(q, a.get("text", "")) for q, a, _ in self.turns]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "created_at": self.created_at,
            "turns": [
                {"question": q, "answer": a, "timestamp": ts} for q, a, ts in self.turns
            ],
        }


class SessionStore:
    """One JSONL file per session: a header line, then one line per turn.

    Lines are written before the in-memory transcript is updated, so a
    crash never loses an acknowledged turn.
    """

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)

    def _path(self, session_id: str) -> str:
        return os.path.join(self.root, f"{session_id}.jsonl")

    def create(self) -> ChatSession:
        session = ChatSession(uuid.uuid4().hex, time.time())
        with open(self._path(session.session_id), "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {"session_id": session.session_id, "created_at": session.created_at}
                )
                + "\n"
            )
        return session

    def append_turn(self, session: ChatSession, question: str, answer: dict) -> None:
        ts = time.time()
        with open(self._path(session.session_id), "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps({"question": question, "answer": answer, "timestamp": ts}) + "\n"
            )
        session.append(question, answer, ts)

    def load_all(self) -> dict[str, ChatSession]:
        sessions: dict[str, ChatSession] = {}
        for name in sorted(os.listdir(self.root)):
            if not name.endswith(".jsonl"):
                continue
            session = self._load(os.path.join(self.root, name))
            if session is not None:
                sessions[session.session_id] = session
        return sessions

    def _load(self, path: str) -> ChatSession | None:
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
        if not lines:
            return None
        try:
            header = json.loads(lines[0])
            session = ChatSession(header["session_id"], float(header["created_at"]))
            for line in lines[1:]:
                turn = json.loads(line)
                session.append(turn["question"], turn["answer"], float(turn["timestamp"]))
        except (ValueError, KeyError, TypeError):
            return None
        return session


class _StoredSession:
    """Adapter giving the engine a SessionLike view over a stored session."""

    def __init__(self, store: SessionStore, session: ChatSession):
        self._store = store
        self._session = session

    def pairs(self) -> list[tuple[str, str]]:
        return self._session.pairs()

    def append_turn(self, question: str, answer: Answer) -> None:
        self._store.append_turn(self._session, question, answer.to_dict())


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def create_app(engine: RagEngine, config: ServiceConfig | None = None) -> FastAPI:
    """Wire the engine into a FastAPI app and recover persisted state."""
    cfg = config or ServiceConfig()
    app = FastAPI(title="litrag", docs_url=None, redoc_url=None)

    for path in (cfg.corpus_path, cfg.snapshot_path):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
    store = SessionStore(cfg.session_store_path)

    engine.restore(cfg.corpus_path, cfg.snapshot_path)
    sessions: dict[str, ChatSession] = store.load_all()
    session_locks: dict[str, threading.Lock] = {sid: threading.Lock() for sid in sessions}
    registry_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    def _on_validation(_request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", str(exc))

    @app.get("/health")
    def health() -> dict:
        stats = engine.stats()
        return {"status": "ok", "chunks": stats["chunks"], "docs": stats["docs"]}

    @app.post("/documents")
    async def ingest_documents(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        if not body.strip():
            return _error(400, "empty_body", "request body carried no corpus lines")
        ingested = 0
        skipped = 0
        failed = 0
        appended: list[str] = []
        for line in body.splitlines():
            if not line.strip():
                continue
            try:
                parsed = parse_corpus_line(line)
                if engine.has_document(parsed.doc_id):
                    skipped += 1
                    continue
                doc = engine.ingest(parsed.meta, parsed.text)
                appended.append(corpus_line(doc.meta, doc.text))
                ingested += 1
            except (ValueError, EmptyDocument):
                failed += 1
        if appended:
            with open(cfg.corpus_path, "a", encoding="utf-8") as fh:
                for line in appended:
                    fh.write(line + "\n")
            engine.save_snapshot(cfg.snapshot_path)
        return {"ingested": ingested, "skipped_duplicates": skipped, "failed": failed}

    def _overridden_configs(
        payload: dict,
    ) -> tuple[RetrievalConfig, GenerationConfig]:
        from dataclasses import replace

        retrieval = engine.retrieval
        if "k" in payload and payload["k"] is not None:
            k = int(payload["k"])
            retrieval = replace(retrieval, k=k, rerank_pool=max(retrieval.rerank_pool, k))
        generation = engine.generation
        updates: dict[str, Any] = {}
        if "temperature" in payload and payload["temperature"] is not None:
            updates["temperature"] = float(payload["temperature"])
        if "max_tokens" in payload and payload["max_tokens"] is not None:
            updates["max_new_tokens"] = int(payload["max_tokens"])
        if updates:
            generation = replace(generation, **updates)
        return retrieval, generation

    def _answer(payload: dict, session: _StoredSession | None):
        question = str(payload.get("question", "") or "").strip()
        if not question:
            return _error(400, "empty_question", "question must be non-empty")
        try:
            retrieval, generation = _overridden_configs(payload)
        except ValueError as exc:
            return _error(400, "bad_request", str(exc))
        try:
            answer = engine.answer_query(question, session, retrieval, generation)
        except (EndpointUnavailable, ModelError) as exc:
            return _error(502, "endpoint_unavailable", str(exc))
        except BudgetTooSmall as exc:
            return _error(400, "budget_too_small", str(exc))
        return JSONResponse(answer.to_dict())

    @app.post("/query")
    def query(payload: dict = Body(...)):
        return _answer(payload, None)

    @app.post("/sessions")
    def create_session() -> dict:
        session = store.create()
        with registry_lock:
            sessions[session.session_id] = session
            session_locks[session.session_id] = threading.Lock()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/messages")
    def session_message(session_id: str, payload: dict = Body(...)):
        with registry_lock:
            session = sessions.get(session_id)
            lock = session_locks.get(session_id)
        if session is None or lock is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        if not lock.acquire(blocking=False):
            return _error(409, "busy", "previous answer for this session still generating")
        try:
            return _answer(payload, _StoredSession(store, session))
        finally:
            lock.release()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id}")
        return JSONResponse(session.to_dict())

    return app


def serve(engine: RagEngine, config: ServiceConfig) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(engine, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
