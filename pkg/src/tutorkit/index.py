"""Hybrid retrieval over an immutable index snapshot.

Keyword search is BM25 (k1=1.2, b=0.75) over the shared tokenizer with the
non-negative IDF variant idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), so
matching chunks always score above zero. Vector search is exact cosine over
the stored embeddings. The two rankings are merged by reciprocal-rank
fusion with constant 60, then re-ordered by a pluggable reranker whose
default scores query-term overlap. All ties break by ascending chunk_id,
which makes results independent of chunk insertion order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .textutil import term_counts, tokenize

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75
RRF_K = 60
RERANK_WEIGHT = 0.5
DEFAULT_K = 10
SNAPSHOT_VERSION = 1


@dataclass
class Chunk:
    """The unit of retrieval and citation: one excerpt of a course document."""

    chunk_id: str
    source_path: str
    unit_number: int
    ordinal: int
    text: str
    embedding: list[float] | None = None


def make_chunk_id(source_path: str, unit_number: int, ordinal: int, text: str) -> str:
    """Stable id, unchanged across re-ingestion of identical content."""
    key = f"{source_path}\x00{unit_number}\x00{ordinal}\x00{text}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


@dataclass
class RetrievalResult:
    chunk: Chunk
    keyword_score: float
    vector_score: float
    fused_score: float
    final_rank: int


@dataclass(frozen=True)
class IndexSnapshot:
    """Immutable hybrid index: keyword postings plus a vector store built
    over the identical chunk set. Construct via build_snapshot()."""

    chunks: tuple[Chunk, ...]
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    vectors: dict[str, list[float]]
    created_at: str
    content_hash: str
    embedding_dim: int
    matrix: np.ndarray = field(repr=False, compare=False, default=None)
    matrix_ids: tuple[str, ...] = field(repr=False, compare=False, default=())

    def chunk_by_id(self, chunk_id: str) -> Chunk:
        return self._by_id[chunk_id]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {c.chunk_id: c for c in self.chunks})


def _canonical(chunks: Sequence[Chunk]) -> list[Chunk]:
    return sorted(chunks, key=lambda c: (c.source_path, c.unit_number, c.ordinal))


def _content_hash(chunks: Sequence[Chunk]) -> str:
    h = hashlib.sha256()
    for c in _canonical(chunks):
        h.update(c.chunk_id.encode("ascii"))
        h.update(b"\x00")
        vec = c.embedding or []
        h.update(json.dumps([repr(v) for v in vec]).encode("ascii"))
        h.update(b"\x01")
    return h.hexdigest()


def build_snapshot(chunks: Sequence[Chunk], created_at: str | None = None) -> IndexSnapshot:
    """Build the immutable snapshot from embedded chunks.

    Chunks are stored in canonical (source_path, unit_number, ordinal) order,
    so the snapshot and its content hash are independent of input order.
    """
    ordered = _canonical(chunks)
    seen: set[str] = set()
    for c in ordered:
        if c.chunk_id in seen:
            raise ValueError(f"duplicate chunk_id {c.chunk_id}")
        seen.add(c.chunk_id)
        if c.embedding is None:
            raise ValueError(f"chunk {c.chunk_id} has no embedding")
    dims = {len(c.embedding) for c in ordered}
    if len(dims) > 1:
        raise ValueError("chunks carry embeddings of mixed dimension")
    dim = dims.pop() if dims else 0

    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for c in ordered:
        counts = term_counts(c.text)
        doc_lengths[c.chunk_id] = sum(counts.values())
        for term, tf in counts.items():
            postings.setdefault(term, []).append((c.chunk_id, tf))
    avg = (sum(doc_lengths.values()) / len(doc_lengths)) if doc_lengths else 0.0

    matrix_ids = tuple(c.chunk_id for c in ordered)
    matrix = (
        np.array([c.embedding for c in ordered], dtype=np.float64)
        if ordered
        else np.zeros((0, dim))
    )
    return IndexSnapshot(
        chunks=tuple(ordered),
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        vectors={c.chunk_id: list(c.embedding) for c in ordered},
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
        content_hash=_content_hash(ordered),
        embedding_dim=dim,
        matrix=matrix,
        matrix_ids=matrix_ids,
    )


def bm25_idf(n_docs: int, doc_freq: int) -> float:
    return math.log(1.0 + (n_docs - doc_freq + 0.5) / (doc_freq + 0.5))


def keyword_search(snapshot: IndexSnapshot, query: str, k: int) -> list[tuple[Chunk, float]]:
    """BM25 top-k. Each distinct query term contributes once; only chunks
    with positive score are returned."""
    terms = list(dict.fromkeys(tokenize(query)))
    n_docs = len(snapshot.chunks)
    if not terms or n_docs == 0:
        return []
    scores: dict[str, float] = {}
    for term in terms:
        plist = snapshot.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(n_docs, len(plist))
        for chunk_id, tf in plist:
            dl = snapshot.doc_lengths[chunk_id]
            norm = BM25_K1 * (1.0 - BM25_B + BM25_B * dl / snapshot.avg_doc_length)
            scores[chunk_id] = scores.get(chunk_id, 0.0) + idf * tf * (BM25_K1 + 1.0) / (tf + norm)
    ranked = sorted(
        ((cid, s) for cid, s in scores.items() if s > 0.0),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return [(snapshot.chunk_by_id(cid), s) for cid, s in ranked[:k]]


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of two vectors; zero vectors score 0 rather than dividing by 0."""
    denom = math.sqrt(float(np.dot(u, u))) * math.sqrt(float(np.dot(v, v)))
    if denom == 0.0:
        return 0.0
    return float(np.dot(u, v)) / denom


def vector_search(
    snapshot: IndexSnapshot, query_vector: Sequence[float], k: int
) -> list[tuple[Chunk, float]]:
    """Exact top-k by cosine similarity, computed as a full scan over the
    stored vectors (no approximation). Ties break by ascending chunk_id."""
    if not snapshot.chunks:
        return []
    if len(query_vector) != snapshot.embedding_dim:
        raise ValueError(
            f"query vector dimension {len(query_vector)} != index dimension {snapshot.embedding_dim}"
        )
    q = np.asarray(query_vector, dtype=np.float64)
    sims = [cosine_similarity(snapshot.matrix[i], q) for i in range(len(snapshot.matrix_ids))]
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], snapshot.matrix_ids[i]))
    return [(snapshot.chunk_by_id(snapshot.matrix_ids[i]), sims[i]) for i in order[:k]]


def fuse_rrf(
    keyword_ranked: Sequence[tuple[Chunk, float]],
    vector_ranked: Sequence[tuple[Chunk, float]],
    rrf_k: int = RRF_K,
) -> list[RetrievalResult]:
    """Merge ranked lists: fused(c) = sum over lists containing c of
    1 / (rrf_k + rank), rank 1-based within each list."""
    entries: dict[str, RetrievalResult] = {}
    for rank, (chunk, score) in enumerate(keyword_ranked, start=1):
        entries[chunk.chunk_id] = RetrievalResult(
            chunk=chunk,
            keyword_score=score,
            vector_score=0.0,
            fused_score=1.0 / (rrf_k + rank),
            final_rank=0,
        )
    for rank, (chunk, score) in enumerate(vector_ranked, start=1):
        entry = entries.get(chunk.chunk_id)
        if entry is None:
            entries[chunk.chunk_id] = RetrievalResult(
                chunk=chunk,
                keyword_score=0.0,
                vector_score=score,
                fused_score=1.0 / (rrf_k + rank),
                final_rank=0,
            )
        else:
            entry.vector_score = score
            entry.fused_score += 1.0 / (rrf_k + rank)
    fused = sorted(entries.values(), key=lambda r: (-r.fused_score, r.chunk.chunk_id))
    for i, result in enumerate(fused, start=1):
        result.final_rank = i
    return fused


def overlap_reranker(query: str, chunk: Chunk) -> float:
    """Share of distinct query terms that occur in the chunk."""
    q_terms = set(tokenize(query))
    if not q_terms:
        return 0.0
    c_terms = set(tokenize(chunk.text))
    return len(q_terms & c_terms) / len(q_terms)


Reranker = Callable[[str, Chunk], float]


def rerank(
    fused: Sequence[RetrievalResult],
    query: str,
    reranker: Reranker | None = None,
) -> list[RetrievalResult]:
    """Stable re-ordering by fused_score + RERANK_WEIGHT * reranker score.

    A failing reranker falls back to the fused order with a warning.
    """
    scorer = reranker or overlap_reranker
    results = [replace(r) for r in fused]
    try:
        for r in results:
            r.fused_score += RERANK_WEIGHT * scorer(query, r.chunk)
    except Exception:
        logger.warning("reranker failed; falling back to fused order", exc_info=True)
        results = [replace(r) for r in fused]
    results.sort(key=lambda r: (-r.fused_score, r.chunk.chunk_id))
    for i, r in enumerate(results, start=1):
        r.final_rank = i
    return results


def retrieve(
    snapshot: IndexSnapshot,
    query: str,
    backend,
    k: int = DEFAULT_K,
    reranker: Reranker | None = None,
) -> tuple[list[RetrievalResult], bool]:
    """Full retrieval: embed the query, run keyword and vector search with a
    candidate pool of 2k each, fuse, rerank, truncate to k.

    Returns (results, degraded). When embedding fails the pipeline degrades
    to keyword-only retrieval and flags it instead of failing the query.
    """
    from . import gateway as gw

    pool = 2 * k
    keyword = keyword_search(snapshot, query, pool)
    degraded = False
    vector: list[tuple[Chunk, float]] = []
    if snapshot.chunks:
        try:
            query_vec = gw.embed([query], backend)[0]
            vector = vector_search(snapshot, query_vec, pool)
        except gw.GatewayError:
            logger.warning("query embedding failed; keyword-only retrieval", exc_info=True)
            degraded = True
    results = rerank(fuse_rrf(keyword, vector), query, reranker)[:k]
    for i, r in enumerate(results, start=1):
        r.final_rank = i
    return results, degraded


# --- Snapshot serialization (versioned JSON container) ---------------------


def snapshot_to_dict(snapshot: IndexSnapshot) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "created_at": snapshot.created_at,
        "content_hash": snapshot.content_hash,
        "embedding_dim": snapshot.embedding_dim,
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "source_path": c.source_path,
                "unit_number": c.unit_number,
                "ordinal": c.ordinal,
                "text": c.text,
                "embedding": c.embedding,
            }
            for c in snapshot.chunks
        ],
    }


def snapshot_from_dict(data: dict) -> IndexSnapshot:
    if data.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {data.get('version')!r}")
    chunks = [
        Chunk(
            chunk_id=c["chunk_id"],
            source_path=c["source_path"],
            unit_number=c["unit_number"],
            ordinal=c["ordinal"],
            text=c["text"],
            embedding=list(c["embedding"]),
        )
        for c in data["chunks"]
    ]
    snapshot = build_snapshot(chunks, created_at=data["created_at"])
    if snapshot.content_hash != data["content_hash"]:
        raise ValueError("snapshot content hash mismatch; file is corrupt")
    return snapshot


def save_snapshot(snapshot: IndexSnapshot, path: str | Path) -> None:
    Path(path).write_text(json.dumps(snapshot_to_dict(snapshot)), encoding="utf-8")


def load_snapshot(path: str | Path) -> IndexSnapshot:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read snapshot {path}: {exc}") from exc
    return snapshot_from_dict(data)
