"""litrag: retrieval-augmented question answering over scientific literature.

Ingest corpus documents, chunk and embed them, retrieve by cosine
similarity with diversity re-ranking, and answer questions through an
external chat endpoint with formatted references. Usable as a library,
an HTTP service, or the `litrag` CLI.
"""

from .corpus import (
    Chunk,
    ChunkingConfig,
    Document,
    DocumentMeta,
    ReferenceTokenizer,
    canonicalize_doi,
    chunk_document,
    normalize_text,
)
from .embed import EmbedderConfig, HttpEmbedder, ReferenceEmbedder, normalize
from .errors import (
    BudgetTooSmall,
    CorruptSnapshot,
    DimensionMismatch,
    DuplicateChunk,
    EmptyDocument,
    EndpointUnavailable,
    LitragError,
    MissingMetadata,
    ModelError,
    SourceUnavailable,
    ZeroVector,
)
from .index import RetrievalConfig, RetrievalHit, VectorIndex, cosine_similarity
from .rag import (
    Answer,
    ChatClient,
    GenerationConfig,
    MemorySession,
    Prompt,
    RagEngine,
    ReferenceLine,
    assemble_prompt,
    format_references,
)

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "BudgetTooSmall",
    "ChatClient",
    "Chunk",
    "ChunkingConfig",
    "CorruptSnapshot",
    "DimensionMismatch",
    "Document",
    "DocumentMeta",
    "DuplicateChunk",
    "EmbedderConfig",
    "EmptyDocument",
    "EndpointUnavailable",
    "GenerationConfig",
    "HttpEmbedder",
    "LitragError",
    "MemorySession",
    "MissingMetadata",
    "ModelError",
    "Prompt",
    "RagEngine",
    "ReferenceEmbedder",
    "ReferenceLine",
    "ReferenceTokenizer",
    "RetrievalConfig",
    "RetrievalHit",
    "SourceUnavailable",
    "VectorIndex",
    "ZeroVector",
    "canonicalize_doi",
    "chunk_document",
    "cosine_similarity",
    "format_references",
    "normalize",
    "normalize_text",
    "__version__",
]
