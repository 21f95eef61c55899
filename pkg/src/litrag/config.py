"""Flat key/value settings files plus engine wiring.

Settings files are TOML-like `key = value` lines: comments start with #,
strings may be quoted, bare ints/floats/bools are coerced. File values
take precedence over environment variables, which take precedence over
built-in defaults.
"""

from __future__ import annotations

import os
from typing import Any


def parse_kv_text(text: str) -> dict[str, Any]:
    settings: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        settings[key.strip()] = _coerce(value.strip())
    return settings


def load_settings(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return parse_kv_text(fh.read())


def _coerce(value: str) -> Any:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def setting(settings: dict[str, Any], key: str, env: str | None, default: Any) -> Any:
    """File value, else environment variable, else default."""
    if key in settings:
        return settings[key]
    if env and env in os.environ:
        return os.environ[env]
    return default


def build_engine(settings: dict[str, Any]):
    """Assemble a RagEngine from settings plus EMBED_*/CHAT_* env vars.

    Without an embed endpoint the deterministic hashed reference embedder
    is used; without a chat endpoint the engine is retrieval-only and
    answer_query raises EndpointUnavailable.
    """
    from .corpus import ChunkingConfig
    from .embed import DEFAULT_DIM, EmbedderConfig, HttpEmbedder, ReferenceEmbedder
    from .index import RetrievalConfig
    from .rag import ChatClient, GenerationConfig, RagEngine

    dim = int(setting(settings, "embed_dim", "EMBED_DIM", DEFAULT_DIM))
    embed_url = setting(settings, "embed_url", "EMBED_URL", "")
    if embed_url:
        embedder = HttpEmbedder(
            EmbedderConfig(
                endpoint_url=embed_url,
                model_name=setting(settings, "embed_model", "EMBED_MODEL", ""),
                dim=dim,
            )
        )
    else:
        embedder = ReferenceEmbedder(dim)

    chat_url = setting(settings, "chat_url", "CHAT_URL", "")
    chat = None
    if chat_url:
        chat = ChatClient(
            chat_url=chat_url,
            default_model=setting(settings, "chat_model", "CHAT_MODEL", ""),
        )

    chunking = ChunkingConfig(
        chunk_tokens=int(setting(settings, "chunk_tokens", None, 512)),
        overlap_tokens=int(setting(settings, "overlap_tokens", None, 64)),
        doc_token_limit=int(setting(settings, "doc_token_limit", None, 4096)),
    )
    retrieval = RetrievalConfig(
        k=int(setting(settings, "k", None, 3)),
        rerank_enabled=bool(setting(settings, "rerank_enabled", None, True)),
        rerank_pool=int(setting(settings, "rerank_pool", None, 10)),
        mmr_lambda=float(setting(settings, "mmr_lambda", None, 0.7)),
    )
    generation = GenerationConfig(
        max_new_tokens=int(setting(settings, "max_new_tokens", None, 700)),
        temperature=float(setting(settings, "temperature", None, 0.3)),
        model_name=setting(settings, "chat_model", "CHAT_MODEL", ""),
        context_budget_tokens=int(setting(settings, "context_budget_tokens", None, 3000)),
    )
    return RagEngine(
        embedder=embedder,
        chat=chat,
        chunking=chunking,
        retrieval=retrieval,
        generation=generation,
    )
