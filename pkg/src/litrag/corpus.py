"""Document model, token counting, and token-window chunking.

Everything here is a pure function over immutable inputs. The reference
tokenizer is deliberately simple and deterministic: a token is either a
maximal run of letters/digits or a single punctuation mark. Production
deployments can plug any tokenizer exposing the same ``spans``/``count``
contract; every invariant downstream is stated against the configured
tokenizer, not this particular one.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Iterator, Protocol

from .errors import EmptyDocument

SOURCES = frozenset({"elsevier-api", "springer-oa", "acs-oa", "local-file", "other"})

# Control characters that are not whitespace (C0 minus \t\n\v\f\r, DEL, C1).
_NONWS_CONTROL = re.compile(r"[\x00-\x08\x0e-\x1f\x7f-\x9f]")
_WS_RUN = re.compile(r"\s+")

# Alphanumeric runs (underscore excluded), else one token per punctuation mark.
_TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")

_DOI_PREFIX = re.compile(r"^(?:doi:)?(?:https?://)?(?:dx\.)?(?:doi\.org/)?", re.IGNORECASE)
_DOI_SHAPE = re.compile(r"^10\.[^/\s]+/\S+$")


def normalize_text(raw: str) -> str:
    """Collapse whitespace runs to single spaces, drop control chars, trim."""
    cleaned = _NONWS_CONTROL.sub("", raw)
    return _WS_RUN.sub(" ", cleaned).strip()


class Tokenizer(Protocol):
    """Pluggable token-counting contract.

    ``spans`` returns half-open character offsets of each token in order;
    ``count`` returns the token count. Both must be deterministic.
    """

    def spans(self, text: str) -> list[tuple[int, int]]: ...

    def count(self, text: str) -> int: ...


class ReferenceTokenizer:
    """Whitespace-and-punctuation splitter shipped as the test oracle."""

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in _TOKEN.finditer(text)]

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN.finditer(text))


DEFAULT_TOKENIZER = ReferenceTokenizer()


def tokenize(text: str) -> list[str]:
    """Token strings under the reference tokenizer."""
    return _TOKEN.findall(text)


def count_tokens(text: str) -> int:
    """Token count under the reference tokenizer; 0 for empty input."""
    return DEFAULT_TOKENIZER.count(text)


def canonicalize_doi(raw: str) -> str:
    """Lowercase and strip URL/scheme prefixes: bare ``10.<reg>/<suffix>``."""
    return _DOI_PREFIX.sub("", raw.strip()).lower()


@dataclass
class DocumentMeta:
    """Bibliographic metadata for one source paper."""

    doi: str
    title: str
    authors: list[str]
    year: int
    source: str = "other"
    url: str | None = None

    def __post_init__(self) -> None:
        self.doi = canonicalize_doi(self.doi)
        if not self.doi or not _DOI_SHAPE.match(self.doi):
            raise ValueError(f"malformed DOI: {self.doi!r}")
        if not 1900 <= self.year <= 2100:
            raise ValueError(f"year out of range: {self.year}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source: {self.source!r}")


@dataclass
class Document:
    """A normalized source paper ready for chunking."""

    doc_id: str
    meta: DocumentMeta
    text: str
    token_count: int

    @classmethod
    def from_raw(
        cls,
        meta: DocumentMeta,
        raw_text: str,
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ) -> "Document":
        """Normalize ``raw_text`` and build a document keyed by its DOI.

        Raises:
            EmptyDocument: if the text normalizes to the empty string.
        """
        text = normalize_text(raw_text)
        if not text:
            raise EmptyDocument(f"document {meta.doi} has no text after normalization")
        return cls(doc_id=meta.doi, meta=meta, text=text, token_count=tokenizer.count(text))


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_tokens: int = 512
    overlap_tokens: int = 64
    doc_token_limit: int = 4096

    def __post_init__(self) -> None:
        if self.chunk_tokens <= 0:
            raise ValueError("chunk_tokens must be positive")
        if self.overlap_tokens < 0:
            raise ValueError("overlap_tokens must be non-negative")
        if self.overlap_tokens >= self.chunk_tokens:
            raise ValueError("overlap_tokens must be smaller than chunk_tokens")
        if self.chunk_tokens > self.doc_token_limit:
            raise ValueError("chunk_tokens must not exceed doc_token_limit")


@dataclass(frozen=True)
class Chunk:
    """Token-bounded slice of a document; the unit of embedding and retrieval."""

    chunk_id: str
    doc_id: str
    seq: int
    token_start: int
    token_end: int
    text: str


def chunk_document(
    doc: Document,
    cfg: ChunkingConfig = ChunkingConfig(),
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[Chunk]:
    """Split a document into overlapping token windows.

    Window i covers tokens [i*stride, i*stride + chunk_tokens) with
    stride = chunk_tokens - overlap_tokens; the last window is clipped to
    the document end. A document of at most chunk_tokens tokens yields
    exactly one chunk. Chunk text is sliced at token boundaries, so
    re-tokenizing a chunk reproduces its token range exactly.
    """
    spans = tokenizer.spans(doc.text)
    n = len(spans)
    if n == 0:
        raise EmptyDocument(f"document {doc.doc_id} has no tokens")

    if n <= cfg.chunk_tokens:
        starts = [0]
    else:
        stride = cfg.chunk_tokens - cfg.overlap_tokens
        n_chunks = math.ceil(max(n - cfg.overlap_tokens, 1) / stride)
        starts = [i * stride for i in range(n_chunks)]

    chunks = []
    for seq, start in enumerate(starts):
        end = min(start + cfg.chunk_tokens, n)
        text = doc.text[spans[start][0] : spans[end - 1][1]]
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{seq}",
                doc_id=doc.doc_id,
                seq=seq,
                token_start=start,
                token_end=end,
                text=text,
            )
        )
    return chunks


def parse_corpus_line(line: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> Document:
    """Parse one corpus JSONL line into a Document.

    Raises ValueError on malformed JSON or missing/invalid fields, and
    EmptyDocument when the text normalizes away.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValueError("corpus line must be a JSON object")
    try:
        meta = DocumentMeta(
            doi=obj["doi"],
            title=obj["title"],
            authors=list(obj["authors"]),
            year=int(obj["year"]),
            source=obj.get("source", "other"),
            url=obj.get("url"),
        )
        text = obj["text"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"missing or malformed field: {exc}") from exc
    return Document.from_raw(meta, text, tokenizer)


def read_corpus(path: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> Iterator[Document]:
    """Yield documents from a corpus JSONL file, skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_corpus_line(line, tokenizer)


def corpus_line(meta: DocumentMeta, text: str) -> str:
    """Render one corpus JSONL line (the inverse of parse_corpus_line)."""
    return json.dumps(
        {
            "doi": meta.doi,
            "title": meta.title,
            "authors": meta.authors,
            "year": meta.year,
            "source": meta.source,
            "url": meta.url,
            "text": text,
        },
        ensure_ascii=False,
    )
