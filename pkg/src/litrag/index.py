"""In-memory vector index: exact cosine top-k, MMR re-ranking, snapshots.

Search is an exact linear scan over unit vectors, so cosine similarity is
a single matrix-vector product. Scores are rounded to 1e-9 and clamped to
[-1, 1] before any comparison, and ties break by ascending insertion
order, which keeps results deterministic across platforms.

All public methods are guarded by one lock: readers are serialized rather
than concurrent, which is stronger than the required readers-or-one-writer
contract and plenty at desk scale. A search never observes a partially
inserted entry, and snapshots are taken under the same lock.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, replace

import numpy as np

from .errors import CorruptSnapshot, DimensionMismatch, DuplicateChunk, ZeroVector

SNAPSHOT_MAGIC = b"NRAGIDX1"
SCORE_DECIMALS = 9
UNIT_NORM_TOL = 1e-9


def _rounded_clamped(score: float) -> float:
    return min(1.0, max(-1.0, round(score, SCORE_DECIMALS)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product over the product of magnitudes, in [-1, 1].

    Symmetric and scale-invariant; the result is rounded to 1e-9 and then
    clamped so collinear inputs land exactly on the +/-1 endpoints.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector widths differ: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom < 1e-12:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return _rounded_clamped(float(np.dot(a, b)) / denom)


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    doc_id: str
    vector: np.ndarray
    insert_seq: int


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3
    rerank_enabled: bool = True
    rerank_pool: int = 10
    mmr_lambda: float = 0.7

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.rerank_pool < self.k:
            raise ValueError("rerank_pool must be >= k")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValueError("mmr_lambda must be in [0, 1]")


class VectorIndex:
    """Exact-scan cosine index over unit vectors of one fixed width."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self._dim = dim
        self._lock = threading.RLock()
        self._entries: list[IndexEntry] = []  # ascending insert_seq
        self._by_chunk: dict[str, IndexEntry] = {}
        self._chunks_by_doc: dict[str, set[str]] = {}
        self._next_seq = 1
        self._matrix: np.ndarray | None = None  # rebuilt lazily after mutation

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    @property
    def doc_count(self) -> int:
        with self._lock:
            return len(self._chunks_by_doc)

    def insert(self, chunk_id: str, doc_id: str, vector: np.ndarray) -> IndexEntry:
        """Add one unit vector; visible to the very next search.

        Raises DuplicateChunk for an already-present chunk_id, ZeroVector
        for a degenerate vector, and ValueError when the vector is not
        unit-normalized (vectors are normalized at the embed boundary).
        """
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self._dim,):
            raise DimensionMismatch(f"expected dim {self._dim}, got shape {vec.shape}")
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise ZeroVector(f"zero vector rejected for chunk {chunk_id}")
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"vector for chunk {chunk_id} is not unit-normalized")
        with self._lock:
            if chunk_id in self._by_chunk:
                raise DuplicateChunk(chunk_id)
            entry = IndexEntry(chunk_id, doc_id, vec.copy(), self._next_seq)
            self._next_seq += 1
            self._entries.append(entry)
            self._by_chunk[chunk_id] = entry
            self._chunks_by_doc.setdefault(doc_id, set()).add(chunk_id)
            self._matrix = None
            return entry

    def remove_document(self, doc_id: str) -> int:
        """Drop every chunk of a document; returns how many were removed."""
        with self._lock:
            chunk_ids = self._chunks_by_doc.pop(doc_id, set())
            if not chunk_ids:
                return 0
            self._entries = [e for e in self._entries if e.chunk_id not in chunk_ids]
            for cid in chunk_ids:
                del self._by_chunk[cid]
            self._matrix = None
            return len(chunk_ids)

    def vector_of(self, chunk_id: str) -> np.ndarray:
        with self._lock:
            return self._by_chunk[chunk_id].vector

    def doc_of(self, chunk_id: str) -> str:
        with self._lock:
            return self._by_chunk[chunk_id].doc_id

    def search_top_k(self, query: np.ndarray, k: int) -> list[RetrievalHit]:
        """Exact top-k by cosine score (query must be unit-norm).

        Sorted by score descending, ties by ascending insertion order;
        fewer than k hits come back when the index is smaller.
        """
        if k < 1:
            raise ValueError("k must be positive")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self._dim,):
            raise DimensionMismatch(f"expected dim {self._dim}, got shape {q.shape}")
        with self._lock:
            if not self._entries:
                return []
            if self._matrix is None:
                self._matrix = np.stack([e.vector for e in self._entries])
            scores = np.clip(np.round(self._matrix @ q, SCORE_DECIMALS), -1.0, 1.0)
            # Stable sort on negated scores: ties keep list order == insert_seq.
            order = np.argsort(-scores, kind="stable")[:k]
            return [
                RetrievalHit(
                    chunk_id=self._entries[i].chunk_id,
                    doc_id=self._entries[i].doc_id,
                    score=float(scores[i]),
                    rank=rank,
                )
                for rank, i in enumerate(order, start=1)
            ]

    def rerank(
        self, query: np.ndarray, pool: list[RetrievalHit], cfg: RetrievalConfig
    ) -> list[RetrievalHit]:
        """Greedy maximal-marginal-relevance selection of cfg.k hits.

        The first pick is the pool's top hit; each further pick maximizes
        lambda * relevance - (1 - lambda) * max similarity to the already
        selected set. Relevance reuses the pool's retrieval score, so with
        lambda = 1 the output is exactly the top-k prefix of the pool.
        Ranks are reassigned 1..n; a pool smaller than k comes back whole.
        """
        if not pool:
            return []
        lam = cfg.mmr_lambda
        with self._lock:
            vectors = {h.chunk_id: self._by_chunk[h.chunk_id].vector for h in pool}
        selected = [pool[0]]
        candidates = list(pool[1:])
        while len(selected) < cfg.k and candidates:
            best_i = 0
            best_obj = -np.inf
            for i, cand in enumerate(candidates):
                redundancy = max(
                    _rounded_clamped(float(np.dot(vectors[cand.chunk_id], vectors[s.chunk_id])))
                    for s in selected
                )
                obj = lam * cand.score - (1.0 - lam) * redundancy
                if obj > best_obj:  # strict: ties keep pool (relevance) order
                    best_obj = obj
                    best_i = i
            selected.append(candidates.pop(best_i))
        return [replace(hit, rank=rank) for rank, hit in enumerate(selected, start=1)]

    def snapshot(self, path: str) -> None:
        """Write the whole index to a checksummed binary file."""
        with self._lock:
            buf = bytearray()
            buf += SNAPSHOT_MAGIC
            buf += struct.pack("<IQ", self._dim, len(self._entries))
            for e in self._entries:
                cid = e.chunk_id.encode("utf-8")
                did = e.doc_id.encode("utf-8")
                buf += struct.pack("<Q", e.insert_seq)
                buf += struct.pack("<H", len(cid)) + cid
                buf += struct.pack("<H", len(did)) + did
                buf += e.vector.astype("<f8").tobytes()
        buf += struct.pack("<I", crc32c(bytes(buf)))
        with open(path, "wb") as fh:
            fh.write(buf)

    @classmethod
    def load(cls, path: str) -> "VectorIndex":
        """Rebuild an index from a snapshot, bit-exactly.

        Raises CorruptSnapshot on bad magic, truncation, or checksum
        mismatch; OSError propagates for unreadable paths.
        """
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < len(SNAPSHOT_MAGIC) + 4 + 8 + 4:
            raise CorruptSnapshot("snapshot shorter than header")
        if raw[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
            raise CorruptSnapshot("bad magic bytes")
        body, trailer = raw[:-4], raw[-4:]
        if crc32c(body) != struct.unpack("<I", trailer)[0]:
            raise CorruptSnapshot("checksum mismatch")
        off = len(SNAPSHOT_MAGIC)
        dim, count = struct.unpack_from("<IQ", body, off)
        off += 12
        index = cls(dim)
        try:
            for _ in range(count):
                (seq,) = struct.unpack_from("<Q", body, off)
                off += 8
                (cid_len,) = struct.unpack_from("<H", body, off)
                off += 2
                chunk_id = body[off : off + cid_len].decode("utf-8")
                off += cid_len
                (did_len,) = struct.unpack_from("<H", body, off)
                off += 2
                doc_id = body[off : off + did_len].decode("utf-8")
                off += did_len
                vec = np.frombuffer(body, dtype="<f8", count=dim, offset=off).copy()
                off += dim * 8
                entry = IndexEntry(chunk_id, doc_id, vec, seq)
                index._entries.append(entry)
                index._by_chunk[chunk_id] = entry
                index._chunks_by_doc.setdefault(doc_id, set()).add(chunk_id)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise CorruptSnapshot(f"malformed record: {exc}") from exc
        if off != len(body):
            raise CorruptSnapshot("trailing bytes after last record")
        if index._entries:
            index._next_seq = max(e.insert_seq for e in index._entries) + 1
        return index


def _make_crc32c_table() -> list[int]:
    poly = 0x82F63B78  # Castagnoli, reflected
    table = []
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC32C_TABLE = _make_crc32c_table()


def crc32c(data: bytes) -> int:
    """CRC-32C (Castagnoli) checksum of data."""
    table = _CRC32C_TABLE
    crc = 0xFFFFFFFF
    for byte in data:
        crc = (crc >> 8) ^ table[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFFFFFF
