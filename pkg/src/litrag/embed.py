"""Embedding contract: text in, unit vector out.

Two interchangeable backends ship here. ``HttpEmbedder`` speaks the JSON
wire protocol of an external embedding endpoint; ``ReferenceEmbedder`` is
a deterministic hashed bag-of-tokens embedder that needs no endpoint and
anchors every test. Both normalize at the boundary, so cosine similarity
downstream is a plain dot product.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from ._http import post_json_with_retries
from .corpus import tokenize
from .errors import DimensionMismatch, EndpointUnavailable, ZeroVector

DEFAULT_DIM = 768
ZERO_NORM_EPS = 1e-12


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale a raw vector to unit L2 norm, preserving direction.

    Raises:
        ZeroVector: if the norm is below 1e-12 (unusable embedding).
        ValueError: if any component is NaN/Inf.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite components")
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_EPS:
        raise ZeroVector("vector norm below 1e-12")
    return arr / norm


@dataclass(frozen=True)
class EmbedderConfig:
    endpoint_url: str
    model_name: str
    dim: int = DEFAULT_DIM
    timeout_ms: int = 10_000
    max_batch: int = 32
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "EmbedderConfig":
        """Build from EMBED_URL / EMBED_MODEL / EMBED_DIM."""
        kwargs = {
            "endpoint_url": os.environ.get("EMBED_URL", ""),
            "model_name": os.environ.get("EMBED_MODEL", ""),
            "dim": int(os.environ.get("EMBED_DIM", DEFAULT_DIM)),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


class Embedder(Protocol):
    """Anything that turns text into unit vectors of a fixed width."""

    @property
    def dim(self) -> int: ...

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HttpEmbedder:
    """Client for an external embedding endpoint.

    Wire protocol: ``POST endpoint_url`` with body
    ``{"model": <model_name>, "input": [<text>, ...]}``; the response is
    ``{"data": [{"index": 0, "embedding": [...]}, ...]}`` with entries
    matched back to inputs by index. Transient failures are retried with
    exponential backoff before EndpointUnavailable is raised.

    One instance is safe to share across request handlers; concurrent
    in-flight requests are capped by ``max_concurrency``.
    """

    def __init__(
        self,
        config: EmbedderConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._client = httpx.Client(
            timeout=config.timeout_ms / 1000.0, transport=transport
        )
        self._sleep = sleep
        self._inflight = threading.Semaphore(config.max_concurrency)

    @property
    def dim(self) -> int:
        return self.config.dim

    def embed_text(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed texts in input order, splitting into max_batch-sized requests."""
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.config.max_batch):
            out.extend(self._request(list(texts[start : start + self.config.max_batch])))
        return out

    # Aliases naming the two retrieval roles; a split-model deployment only
    # needs to point these at different instances.
    embed_query = embed_text
    embed_document = embed_text

    def _request(self, batch: list[str]) -> list[np.ndarray]:
        payload = {"model": self.config.model_name, "input": batch}
        with self._inflight:
            resp = post_json_with_retries(
                self._client, self.config.endpoint_url, payload, sleep=self._sleep
            )
        if resp.status_code != 200:
            raise EndpointUnavailable(
                f"embedding endpoint returned HTTP {resp.status_code}"
            )
        try:
            data = resp.json()["data"]
            by_index = {int(item["index"]): item["embedding"] for item in data}
            raw = [by_index[i] for i in range(len(batch))]
        except (KeyError, TypeError, ValueError) as exc:
            raise EndpointUnavailable(f"malformed embedding response: {exc}") from exc
        vectors = []
        for values in raw:
            if len(values) != self.config.dim:
                raise DimensionMismatch(
                    f"endpoint returned {len(values)} values, expected {self.config.dim}"
                )
            vectors.append(normalize(values))
        return vectors

    def close(self) -> None:
        self._client.close()


class ReferenceEmbedder:
    """Deterministic, endpoint-free hashed bag-of-tokens embedder.

    Each token is hashed into one of ``dim`` buckets; bucket counts are
    normalized to a unit vector. Equal texts map to identical vectors, and
    texts sharing tokens score higher than token-disjoint texts.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, text: str) -> np.ndarray:
        return reference_embed(text, self._dim)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_text(t) for t in texts]

    embed_query = embed_text
    embed_document = embed_text


def token_bucket(token: str, dim: int) -> int:
    """Stable hash bucket for a token, independent of process seed."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % dim


def reference_embed(text: str, dim: int) -> np.ndarray:
    """Hash tokens into dim buckets, count occurrences, unit-normalize.

    Raises ZeroVector when the text has no tokens.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    tokens = tokenize(text)
    if not tokens:
        raise ZeroVector("text has no tokens")
    counts = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        counts[token_bucket(tok, dim)] += 1.0
    return normalize(counts)
