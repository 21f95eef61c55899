"""End-to-end answering: embed the query, retrieve, re-rank, prompt, generate.

The engine wires together an embedder, the vector index, and a chat
endpoint client. Prompts are assembled under a hard token budget with
whole-block inclusion only, and every answer carries a reference list
computed from the retrieval hits (never parsed out of model text).
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from ._http import post_json_with_retries
from .corpus import (
    DEFAULT_TOKENIZER,
    Chunk,
    ChunkingConfig,
    Document,
    DocumentMeta,
    Tokenizer,
    chunk_document,
)
from .embed import Embedder
from .errors import (
    BudgetTooSmall,
    EndpointUnavailable,
    MissingMetadata,
    ModelError,
)
from .index import RetrievalConfig, RetrievalHit, VectorIndex

SYSTEM_TEXT_VERSION = "v1"
DEFAULT_SYSTEM_TEXT = (
    "You are a research assistant answering questions about scientific "
    "literature. Use only the numbered context passages below; if they do "
    "not contain the answer, say so. Keep the answer grounded in the "
    "passages and mention which ones support each claim."
)

# History turns considered for prompt inclusion, most recent first.
HISTORY_TURN_CAP = 4

REFERENCES_HEADER = "References:"


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 700
    temperature: float = 0.3
    model_name: str = ""
    context_budget_tokens: int = 3000

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.context_budget_tokens < 1:
            raise ValueError("context_budget_tokens must be positive")


@dataclass(frozen=True)
class Prompt:
    system_text: str
    context_blocks: tuple[tuple[str, DocumentMeta], ...]
    history: tuple[tuple[str, str], ...]
    question: str
    total_tokens: int


@dataclass(frozen=True)
class ReferenceLine:
    ordinal: int
    authors: str
    year: int
    title: str
    doi: str

    def render(self) -> str:
        return f"[{self.ordinal}] {self.authors} ({self.year}). {self.title}. DOI: {self.doi}"


@dataclass(frozen=True)
class Answer:
    text: str
    references: tuple[ReferenceLine, ...]
    hits: tuple[RetrievalHit, ...]
    config_used: GenerationConfig

    def render(self) -> str:
        """Answer text, then the reference block, exactly as printed by the CLI."""
        if not self.references:
            return self.text
        lines = "\n".join(ref.render() for ref in self.references)
        return f"{self.text}\n\n{REFERENCES_HEADER}\n{lines}"

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "rendered": self.render(),
            "references": [
                {
                    "ordinal": r.ordinal,
                    "authors": r.authors,
                    "year": r.year,
                    "title": r.title,
                    "doi": r.doi,
                    "line": r.render(),
                }
                for r in self.references
            ],
            "hits": [
                {"chunk_id": h.chunk_id, "doc_id": h.doc_id, "score": h.score, "rank": h.rank}
                for h in self.hits
            ],
            "config_used": {
                "model_name": self.config_used.model_name,
                "temperature": self.config_used.temperature,
                "max_new_tokens": self.config_used.max_new_tokens,
                "context_budget_tokens": self.config_used.context_budget_tokens,
            },
        }


class SessionLike(Protocol):
    """Minimal conversational-history surface the engine needs."""

    def pairs(self) -> list[tuple[str, str]]: ...

    def append_turn(self, question: str, answer: Answer) -> None: ...


class MemorySession:
    """Throwaway in-process session; backs the CLI chat REPL and tests."""

    def __init__(self) -> None:
        self.turns: list[tuple[str, Answer]] = []

    def pairs(self) -> list[tuple[str, str]]:
        return [(q, a.text) for q, a in self.turns]

    def append_turn(self, question: str, answer: Answer) -> None:
        self.turns.append((question, answer))


def render_context_block(ordinal: int, text: str, meta: DocumentMeta) -> str:
    return f"[{ordinal}] {meta.title} (DOI: {meta.doi})\n{text}"


def assemble_prompt(
    question: str,
    context_blocks: Sequence[tuple[str, DocumentMeta]],
    history: Sequence[tuple[str, str]],
    cfg: GenerationConfig,
    system_text: str = DEFAULT_SYSTEM_TEXT,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> Prompt:
    """Greedy token-budgeted prompt assembly.

    Context blocks are considered in rank order, then history turns most
    recent first (capped at HISTORY_TURN_CAP); each piece is included
    whole if it fits the remaining budget and skipped whole otherwise.
    Token costs are summed per rendered segment, which can only
    overcount the final prompt, never undercount it.

    Raises BudgetTooSmall when system text plus question alone overflow.
    """
    if not question:
        raise ValueError("question must be non-empty")
    count = tokenizer.count
    total = count(system_text) + count(question)
    if total > cfg.context_budget_tokens:
        raise BudgetTooSmall(
            f"system + question need {total} tokens, budget is {cfg.context_budget_tokens}"
        )

    chosen_blocks: list[tuple[str, DocumentMeta]] = []
    header_cost = count("Context:")
    for text, meta in context_blocks:
        cost = count(render_context_block(len(chosen_blocks) + 1, text, meta))
        if not chosen_blocks:
            cost += header_cost
        if total + cost <= cfg.context_budget_tokens:
            chosen_blocks.append((text, meta))
            total += cost

    chosen_turns: list[tuple[str, str]] = []
    for q, a in reversed(history[-HISTORY_TURN_CAP:] if history else []):
        cost = count(q) + count(a)
        if total + cost <= cfg.context_budget_tokens:
            chosen_turns.append((q, a))
            total += cost
    chosen_turns.reverse()  # stored and sent oldest-first

    return Prompt(
        system_text=system_text,
        context_blocks=tuple(chosen_blocks),
        history=tuple(chosen_turns),
        question=question,
        total_tokens=total,
    )


def prompt_messages(prompt: Prompt) -> list[dict]:
    """Chat-completion message list for a prompt."""
    system = prompt.system_text
    if prompt.context_blocks:
        rendered = [
            render_context_block(i, text, meta)
            for i, (text, meta) in enumerate(prompt.context_blocks, start=1)
        ]
        system = f"{system}\n\nContext:\n" + "\n\n".join(rendered)
    messages = [{"role": "system", "content": system}]
    for q, a in prompt.history:
        messages.append({"role": "user", "content": q})
        messages.append({"role": "assistant", "content": a})
    messages.append({"role": "user", "content": prompt.question})
    return messages


class ChatClient:
    """Client for an external chat-completion endpoint.

    Wire protocol: ``POST chat_url`` with ``{"model", "temperature",
    "max_tokens", "messages"}``; the answer text is read from
    ``choices[0].message.content``. Transport errors and 5xx are retried,
    then surface as EndpointUnavailable; an error object in the response
    (or a 4xx carrying one) raises ModelError.
    """

    def __init__(
        self,
        chat_url: str,
        default_model: str = "",
        timeout_ms: int = 60_000,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not chat_url:
            raise ValueError("chat_url must be configured")
        self.chat_url = chat_url
        self.default_model = default_model
        self._client = httpx.Client(timeout=timeout_ms / 1000.0, transport=transport)
        self._sleep = sleep

    @classmethod
    def from_env(cls, **overrides) -> "ChatClient":
        """Build from CHAT_URL / CHAT_MODEL."""
        kwargs = {
            "chat_url": os.environ.get("CHAT_URL", ""),
            "default_model": os.environ.get("CHAT_MODEL", ""),
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    def complete(self, messages: list[dict], cfg: GenerationConfig) -> str:
        payload = {
            "model": cfg.model_name or self.default_model,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_new_tokens,
            "messages": messages,
        }
        resp = post_json_with_retries(self._client, self.chat_url, payload, sleep=self._sleep)
        body = None
        try:
            body = resp.json()
        except ValueError:
            pass
        if isinstance(body, dict) and "error" in body:
            err = body["error"]
            raise ModelError(f"{err.get('code', resp.status_code)}: {err.get('message', err)}")
        if resp.status_code != 200:
            raise EndpointUnavailable(f"chat endpoint returned HTTP {resp.status_code}")
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointUnavailable(f"malformed chat response: {exc}") from exc

    def close(self) -> None:
        self._client.close()


def generate(prompt: Prompt, cfg: GenerationConfig, client: ChatClient) -> str:
    """One chat-completion call carrying cfg verbatim; returns raw model text."""
    return client.complete(prompt_messages(prompt), cfg)


def format_references(
    hits: Sequence[RetrievalHit], metas: Mapping[str, DocumentMeta]
) -> list[ReferenceLine]:
    """Deduplicate hits by DOI in first-rank order and number them from 1."""
    lines: list[ReferenceLine] = []
    seen: set[str] = set()
    for hit in hits:
        meta = metas.get(hit.doc_id)
        if meta is None:
            raise MissingMetadata(f"no metadata for document {hit.doc_id}")
        if meta.doi in seen:
            continue
        seen.add(meta.doi)
        lines.append(
            ReferenceLine(
                ordinal=len(lines) + 1,
                authors=", ".join(meta.authors),
                year=meta.year,
                title=meta.title,
                doi=meta.doi,
            )
        )
    return lines


class RagEngine:
    """Corpus, index, and answering pipeline behind one façade.

    Ingestion normalizes, chunks, embeds, and indexes documents keyed by
    DOI. answer_query runs the full retrieve/re-rank/prompt/generate loop
    and appends the turn to the caller's session. answer_query calls for
    different sessions may run concurrently; ingestion and answering share
    one engine lock around index and metadata mutation.
    """

    def __init__(
        self,
        embedder: Embedder,
        chat: ChatClient | None = None,
        index: VectorIndex | None = None,
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
        chunking: ChunkingConfig = ChunkingConfig(),
        retrieval: RetrievalConfig = RetrievalConfig(),
        generation: GenerationConfig = GenerationConfig(),
        system_text: str = DEFAULT_SYSTEM_TEXT,
    ):
        self.embedder = embedder
        self.chat = chat
        self.index = index if index is not None else VectorIndex(embedder.dim)
        self.tokenizer = tokenizer
        self.chunking = chunking
        self.retrieval = retrieval
        self.generation = generation
        self.system_text = system_text
        self._metas: dict[str, DocumentMeta] = {}
        self._chunk_texts: dict[str, str] = {}
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # Corpus maintenance
    # ------------------------------------------------------------------

    def has_document(self, doi: str) -> bool:
        with self._lock:
            return doi in self._metas

    def ingest(self, meta: DocumentMeta, raw_text: str) -> Document:
        """Normalize, chunk, embed, and index one document.

        The document is visible to the very next query. Raises ValueError
        for an already-ingested DOI and EmptyDocument for empty text.
        """
        doc = Document.from_raw(meta, raw_text, self.tokenizer)
        chunks = chunk_document(doc, self.chunking, self.tokenizer)
        vectors = self.embedder.embed_batch([c.text for c in chunks])
        with self._lock:
            if doc.doc_id in self._metas:
                raise ValueError(f"document {doc.doc_id} already ingested")
            for chunk, vec in zip(chunks, vectors):
                self.index.insert(chunk.chunk_id, chunk.doc_id, vec)
                self._chunk_texts[chunk.chunk_id] = chunk.text
            self._metas[doc.doc_id] = doc.meta
        return doc

    def remove_document(self, doc_id: str) -> int:
        with self._lock:
            removed = self.index.remove_document(doc_id)
            self._metas.pop(doc_id, None)
            stale = [cid for cid in self._chunk_texts if cid.startswith(f"{doc_id}#")]
            for cid in stale:
                del self._chunk_texts[cid]
            return removed

    def stats(self) -> dict:
        with self._lock:
            return {
                "docs": self.index.doc_count,
                "chunks": len(self.index),
                "dim": self.index.dim,
            }

    def save_snapshot(self, path: str) -> None:
        self.index.snapshot(path)

    def restore(self, corpus_path: str | None, snapshot_path: str | None) -> None:
        """Rebuild engine state from the corpus file plus an index snapshot.

        Chunking is deterministic, so chunk texts and metadata are rebuilt
        from the corpus JSONL; vectors come from the snapshot when present
        and are re-embedded only for documents the snapshot predates.
        """
        from .corpus import read_corpus

        if snapshot_path and os.path.exists(snapshot_path):
            self.index = VectorIndex.load(snapshot_path)
        if corpus_path and os.path.exists(corpus_path):
            for doc in read_corpus(corpus_path, self.tokenizer):
                with self._lock:
                    if doc.doc_id in self._metas:
                        continue
                    chunks = chunk_document(doc, self.chunking, self.tokenizer)
                    missing = [c for c in chunks if not self._in_index(c)]
                    if missing:
                        vectors = self.embedder.embed_batch([c.text for c in missing])
                        for chunk, vec in zip(missing, vectors):
                            self.index.insert(chunk.chunk_id, chunk.doc_id, vec)
                    for chunk in chunks:
                        self._chunk_texts[chunk.chunk_id] = chunk.text
                    self._metas[doc.doc_id] = doc.meta

    def _in_index(self, chunk: Chunk) -> bool:
        try:
            self.index.vector_of(chunk.chunk_id)
            return True
        except KeyError:
            return False

    # ------------------------------------------------------------------
    # Answering
    # ------------------------------------------------------------------

    def retrieve(self, question: str, cfg: RetrievalConfig | None = None) -> list[RetrievalHit]:
        """Top-k hits for a question, re-ranked when enabled."""
        cfg = cfg or self.retrieval
        query = self.embedder.embed_query(question)
        pool_size = cfg.rerank_pool if cfg.rerank_enabled else cfg.k
        pool = self.index.search_top_k(query, pool_size)
        if cfg.rerank_enabled:
            return self.index.rerank(query, pool, cfg)
        return pool[: cfg.k]

    def answer_query(
        self,
        question: str,
        session: SessionLike | None = None,
        retrieval_cfg: RetrievalConfig | None = None,
        gen_cfg: GenerationConfig | None = None,
    ) -> Answer:
        """Full pipeline: embed, search, re-rank, prompt, generate, reference."""
        if self.chat is None:
            raise EndpointUnavailable("no chat endpoint configured (set CHAT_URL)")
        gen_cfg = gen_cfg or self.generation
        hits = self.retrieve(question, retrieval_cfg)
        with self._lock:
            blocks = [(self._chunk_texts[h.chunk_id], self._metas[h.doc_id]) for h in hits]
            metas = dict(self._metas)
        history = session.pairs() if session is not None else []
        prompt = assemble_prompt(
            question, blocks, history, gen_cfg, self.system_text, self.tokenizer
        )
        text = generate(prompt, gen_cfg, self.chat)
        answer = Answer(
            text=text,
            references=tuple(format_references(hits, metas)),
            hits=tuple(hits),
            config_used=gen_cfg,
        )
        if session is not None:
            session.append_turn(question, answer)
        return answer
