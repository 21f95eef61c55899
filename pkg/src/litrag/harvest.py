"""Literature harvesting: source adapters, rate limiting, dedupe, corpus emit.

A harvest run takes a search spec, queries one or more source adapters for
candidate identifiers, fetches each record politely (rate limited), drops
duplicates, and writes the full-text records to a corpus JSONL file that
the ingestion pipeline consumes.

Adapters come in two flavours: a replayable fixture adapter backed by a
JSON file (deterministic, used for tests and offline runs) and a plain
HTTP adapter for JSON-speaking endpoints.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import httpx

from ._http import post_json_with_retries
from .corpus import SOURCES, DocumentMeta, canonicalize_doi, corpus_line, normalize_text
from .errors import SourceUnavailable

FETCH_STATUSES = frozenset({"full-text", "abstract-only", "link-only", "failed"})

DEFAULT_REQUEST_INTERVAL_S = 2.0


@dataclass(frozen=True)
class SearchSpec:
    """What to look for: quoted terms plus an optional year window."""

    terms: tuple[str, ...]
    year_from: int | None = None
    year_to: int | None = None
    open_access_only: bool = False
    max_results: int = 50

    def __post_init__(self):
        if not self.terms or any(not t.strip() for t in self.terms):
            raise ValueError("search terms must be non-empty")
        if self.max_results < 1:
            raise ValueError("max_results must be positive")
        if (
            self.year_from is not None
            and self.year_to is not None
            and self.year_from > self.year_to
        ):
            raise ValueError("year_from must not exceed year_to")


def build_query(spec: SearchSpec) -> str:
    """Render a spec as a query string: quoted terms then a year clause.

    Example: terms (nanomaterials, spectroscopy) with years 2015-2024
    renders as '"nanomaterials" "spectroscopy" year:2015-2024'.
    """
    parts = [f'"{term.strip()}"' for term in spec.terms]
    if spec.year_from is not None or spec.year_to is not None:
        lo = "" if spec.year_from is None else str(spec.year_from)
        hi = "" if spec.year_to is None else str(spec.year_to)
        parts.append(f"year:{lo}-{hi}")
    return " ".join(parts)


@dataclass
class SourceRecord:
    """One fetched item. `meta` is present unless the fetch failed outright.

    `identifier` records which id (DOI or source-native) the fetch used.
    `raw` keeps the source payload so records without a usable DOI can
    still be deduped by title and year.
    """

    identifier: str
    fetch_status: str
    meta: DocumentMeta | None = None
    text: str | None = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fetch_status not in FETCH_STATUSES:
            raise ValueError(f"unknown fetch_status: {self.fetch_status!r}")
        if self.fetch_status == "full-text" and not (self.text or "").strip():
            raise ValueError("full-text record must carry non-empty text")
        if self.fetch_status != "failed" and self.meta is None:
            raise ValueError("fetched record must carry metadata")


class SourceAdapter(Protocol):
    name: str

    def search_ids(self, query: str, max_results: int) -> list[str]: ...

    def fetch_record(self, identifier: str) -> SourceRecord: ...


class RateLimiter:
    """Spaces calls at least `min_interval_s` apart. Clock is injectable."""

    def __init__(
        self,
        min_interval_s: float = DEFAULT_REQUEST_INTERVAL_S,
        now: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if min_interval_s < 0:
            raise ValueError("min_interval_s must be non-negative")
        self._interval = min_interval_s
        self._now = now
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        if self._last is not None:
            remaining = self._interval - (self._now() - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._now()


def _record_from_payload(identifier: str, source_name: str, payload: dict) -> SourceRecord:
    status = payload.get("fetch_status", "failed")
    if status == "failed":
        return SourceRecord(identifier=identifier, fetch_status="failed", raw=dict(payload))
    doi = payload.get("doi", "")
    meta = None
    if doi:
        meta = DocumentMeta(
            doi=canonicalize_doi(doi),
            title=normalize_text(payload.get("title", "")),
            authors=list(payload.get("authors", [])),
            year=int(payload.get("year", 0)),
            source=payload.get("source", source_name),
            url=payload.get("url", ""),
        )
    text = payload.get("text")
    if meta is None:
        # No DOI means no canonical identity; keep the payload for
        # title/year dedupe but do not pretend it was fetched cleanly.
        return SourceRecord(identifier=identifier, fetch_status="failed", raw=dict(payload))
    return SourceRecord(
        identifier=identifier,
        fetch_status=status,
        meta=meta,
        text=text,
        raw=dict(payload),
    )


class FixtureReplayAdapter:
    """Replays a recorded harvest from a JSON fixture, byte-deterministic.

    Fixture shape:
        {"source": "elsevier-api",
         "ids": ["10.1/a", "10.1/b"],
         "records": {"10.1/a": {"doi": ..., "title": ..., "authors": [...],
                                "year": ..., "url": ..., "text": ...,
                                "fetch_status": "full-text"}},
         "fail_search": false,
         "fail_ids": ["10.1/b"]}
    """

    def __init__(self, fixture: dict[str, Any]):
        self.name = fixture.get("source", "other")
        if self.name not in SOURCES:
            raise ValueError(f"unknown source tag: {self.name!r}")
        self._ids = list(fixture.get("ids", ()))
        self._records = dict(fixture.get("records", {}))
        self._fail_search = bool(fixture.get("fail_search", False))
        self._fail_ids = set(fixture.get("fail_ids", ()))

    @classmethod
    def from_path(cls, path: str) -> "FixtureReplayAdapter":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def search_ids(self, query: str, max_results: int) -> list[str]:
        if self._fail_search:
            raise SourceUnavailable(f"{self.name}: search unavailable")
        return self._ids[:max_results]

    def fetch_record(self, identifier: str) -> SourceRecord:
        if identifier in self._fail_ids or identifier not in self._records:
            raise SourceUnavailable(f"{self.name}: fetch failed for {identifier}")
        return _record_from_payload(identifier, self.name, self._records[identifier])


class HttpAdapter:
    """Talks to a JSON search endpoint.

    POST {base}/search   {"query": q, "max_results": n}  -> {"ids": [...]}
    POST {base}/records  {"id": identifier}              -> record payload
    """

    def __init__(
        self,
        name: str,
        base_url: str,
        api_key: str = "",
        timeout_s: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if name not in SOURCES:
            raise ValueError(f"unknown source tag: {name!r}")
        self.name = name
        self._base = base_url.rstrip("/")
        headers = {"X-API-Key": api_key} if api_key else {}
        self._client = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def search_ids(self, query: str, max_results: int) -> list[str]:
        resp = post_json_with_retries(
            self._client, f"{self._base}/search", {"query": query, "max_results": max_results}
        )
        if resp.status_code != 200:
            raise SourceUnavailable(f"{self.name}: search returned {resp.status_code}")
        ids = resp.json().get("ids", [])
        return [str(i) for i in ids][:max_results]

    def fetch_record(self, identifier: str) -> SourceRecord:
        resp = post_json_with_retries(
            self._client, f"{self._base}/records", {"id": identifier}
        )
        if resp.status_code != 200:
            raise SourceUnavailable(f"{self.name}: fetch returned {resp.status_code}")
        return _record_from_payload(identifier, self.name, resp.json())


def fetch_records(
    source: SourceAdapter,
    spec: SearchSpec,
    limiter: RateLimiter | None = None,
) -> list[SourceRecord]:
    """Search one source and fetch up to spec.max_results records.

    Individual fetch failures become records with fetch_status "failed";
    SourceUnavailable is raised only when not a single request succeeds.
    """
    limiter = limiter or RateLimiter(0.0)
    query = build_query(spec)
    succeeded = 0
    records: list[SourceRecord] = []
    limiter.wait()
    try:
        ids = source.search_ids(query, spec.max_results)
        succeeded += 1
    except Exception:
        ids = []
    for identifier in ids[: spec.max_results]:
        limiter.wait()
        try:
            records.append(source.fetch_record(identifier))
            succeeded += 1
        except Exception:
            records.append(SourceRecord(identifier=identifier, fetch_status="failed"))
    if succeeded == 0:
        raise SourceUnavailable(f"{source.name}: no request succeeded")
    return records


def dedupe(records: list[SourceRecord]) -> list[SourceRecord]:
    """Keep the first occurrence per canonical DOI.

    Records without a DOI are deduped by (casefolded title, year) from the
    raw payload; records with neither are kept as-is. Idempotent.
    """
    seen: set[tuple] = set()
    kept: list[SourceRecord] = []
    for rec in records:
        if rec.meta is not None:
            key = ("doi", rec.meta.doi)
        else:
            title = normalize_text(str(rec.raw.get("title", ""))).casefold()
            if not title:
                kept.append(rec)
                continue
            key = ("title-year", title, rec.raw.get("year"))
        if key in seen:
            continue
        seen.add(key)
        kept.append(rec)
    return kept


def emit_corpus(records: list[SourceRecord], path: str) -> int:
    """Write full-text records to a corpus JSONL file; returns lines written."""
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            if rec.fetch_status != "full-text":
                continue
            fh.write(corpus_line(rec.meta, rec.text) + "\n")
            written += 1
    return written


def adapters_from_settings(settings: dict[str, Any]) -> list[tuple[SourceAdapter, RateLimiter]]:
    """Build adapters from dotted settings keys.

    source.<label>.kind        fixture | http
    source.<label>.path        fixture file (kind=fixture)
    source.<label>.base_url    endpoint root (kind=http)
    source.<label>.name        source tag (kind=http; fixtures carry their own)
    source.<label>.api_key_env environment variable holding the key
    source.<label>.delay_s     request spacing, default 2.0
    """
    import os

    labels: list[str] = []
    for key in settings:
        if key.startswith("source.") and key.endswith(".kind"):
            labels.append(key[len("source.") : -len(".kind")])
    out: list[tuple[SourceAdapter, RateLimiter]] = []
    for label in sorted(labels):
        prefix = f"source.{label}."
        kind = settings[prefix + "kind"]
        delay = float(settings.get(prefix + "delay_s", DEFAULT_REQUEST_INTERVAL_S))
        if kind == "fixture":
            adapter: SourceAdapter = FixtureReplayAdapter.from_path(settings[prefix + "path"])
        elif kind == "http":
            key_env = settings.get(prefix + "api_key_env", "")
            adapter = HttpAdapter(
                name=settings.get(prefix + "name", "other"),
                base_url=settings[prefix + "base_url"],
                api_key=os.environ.get(key_env, "") if key_env else "",
            )
        else:
            raise ValueError(f"unknown adapter kind: {kind!r}")
        out.append((adapter, RateLimiter(delay)))
    return out


def harvest_corpus(
    spec: SearchSpec,
    sources: list[tuple[SourceAdapter, RateLimiter]],
    out_path: str,
) -> dict[str, int]:
    """Run the full pipeline over sources in order; returns counters."""
    all_records: list[SourceRecord] = []
    unavailable = 0
    for adapter, limiter in sources:
        try:
            all_records.extend(fetch_records(adapter, spec, limiter))
        except SourceUnavailable:
            unavailable += 1
    if sources and unavailable == len(sources):
        raise SourceUnavailable("every source failed")
    unique = dedupe(all_records)
    written = emit_corpus(unique, out_path)
    return {
        "fetched": len(all_records),
        "unique": len(unique),
        "written": written,
        "sources_failed": unavailable,
    }
