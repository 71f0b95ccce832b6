"""Course material ingestion: documents -> metadata-rich chunks -> snapshot.

Input documents are plain UTF-8 text files with two front-matter lines
(``path:`` and ``kind:``) followed by unit-marked content::

    path: slides/week03_motion.txt
    kind: slides

    === unit 1 ===
    Slide one text ...
    === unit 2 ===
    Slide two text ...

A unit is a slide for slide decks and a page or section otherwise; the
default policy never lets a chunk span two units, which preserves
slide-level citations. Oversized units are windowed with overlap.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import gateway as gw
from .index import Chunk, IndexSnapshot, build_snapshot, make_chunk_id

logger = logging.getLogger(__name__)

DOCUMENT_KINDS = ("slides", "transcript", "script", "announcement", "other")
EMBED_BATCH_SIZE = 64

_UNIT_MARKER = re.compile(r"^===\s*unit\s+(\d+)\s*===\s*$")


@dataclass
class SourceDocument:
    """One course document: full relative path (used verbatim in citations),
    a kind tag and ordered numbered units."""

    path: str
    kind: str
    units: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.path:
            raise ValueError("document path must be non-empty")
        if self.kind not in DOCUMENT_KINDS:
            raise ValueError(f"unknown document kind {self.kind!r}")
        last = 0
        for number, _ in self.units:
            if number <= last:
                raise ValueError(f"unit numbers must be strictly increasing in {self.path}")
            last = number


@dataclass
class ChunkPolicy:
    max_chars: int = 2000
    overlap_chars: int = 200
    respect_unit_boundaries: bool = True

    def __post_init__(self):
        if self.max_chars < 1:
            raise ValueError("max_chars must be positive")
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be non-negative")
        if self.overlap_chars >= self.max_chars:
            raise ValueError("overlap_chars must be smaller than max_chars")


def _window(text: str, max_chars: int, overlap_chars: int) -> list[tuple[int, str]]:
    """Sliding windows of max_chars advancing by (max_chars - overlap_chars);
    the window reaching the end is truncated there and ends the sequence."""
    step = max_chars - overlap_chars
    windows = []
    start = 0
    while True:
        end = start + max_chars
        if end >= len(text):
            windows.append((start, text[start:]))
            break
        windows.append((start, text[start:end]))
        start += step
    return windows


def chunk_document(doc: SourceDocument, policy: ChunkPolicy) -> list[Chunk]:
    """Split a document into chunks per the policy, preserving unit order."""
    chunks: list[Chunk] = []
    if policy.respect_unit_boundaries:
        for unit_number, text in doc.units:
            if not text.strip():
                logger.warning("skipping empty unit %d of %s", unit_number, doc.path)
                continue
            for ordinal, (_, piece) in enumerate(_window(text, policy.max_chars, policy.overlap_chars)):
                chunks.append(
                    Chunk(
                        chunk_id=make_chunk_id(doc.path, unit_number, ordinal, piece),
                        source_path=doc.path,
                        unit_number=unit_number,
                        ordinal=ordinal,
                        text=piece,
                    )
                )
    else:
        # Windows run across unit boundaries; each chunk is attributed to the
        # unit containing its start offset.
        kept = [(n, t) for n, t in doc.units if t.strip()]
        for number, text in doc.units:
            if not text.strip():
                logger.warning("skipping empty unit %d of %s", number, doc.path)
        if not kept:
            return []
        joined = "\n".join(t for _, t in kept)
        starts: list[tuple[int, int]] = []
        offset = 0
        for number, text in kept:
            starts.append((offset, number))
            offset += len(text) + 1
        ordinals: dict[int, int] = {}
        for start, piece in _window(joined, policy.max_chars, policy.overlap_chars):
            unit_number = max(n for o, n in starts if o <= start)
            ordinal = ordinals.get(unit_number, 0)
            ordinals[unit_number] = ordinal + 1
            chunks.append(
                Chunk(
                    chunk_id=make_chunk_id(doc.path, unit_number, ordinal, piece),
                    source_path=doc.path,
                    unit_number=unit_number,
                    ordinal=ordinal,
                    text=piece,
                )
            )
    return chunks


def _embed_chunks(chunks: list[Chunk], backend) -> None:
    for i in range(0, len(chunks), EMBED_BATCH_SIZE):
        batch = chunks[i : i + EMBED_BATCH_SIZE]
        vectors = gw.embed([c.text for c in batch], backend)
        for chunk, vec in zip(batch, vectors):
            chunk.embedding = vec


def ingest_corpus(
    docs: Sequence[SourceDocument], policy: ChunkPolicy, backend
) -> IndexSnapshot:
    """Chunk and embed every document, then build one immutable snapshot.

    Any embedding failure aborts the whole ingest; no partial snapshot is
    ever produced.
    """
    seen: set[str] = set()
    for doc in docs:
        if doc.path in seen:
            raise ValueError(f"duplicate document path: {doc.path}")
        seen.add(doc.path)
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, policy))
    _embed_chunks(chunks, backend)
    return build_snapshot(chunks)


def update_corpus(
    snapshot: IndexSnapshot,
    new_docs: Sequence[SourceDocument],
    policy: ChunkPolicy,
    backend,
) -> IndexSnapshot:
    """Return a NEW snapshot with matching paths fully replaced.

    The input snapshot is left untouched: callers swap atomically once the
    replacement has been built end to end.
    """
    seen: set[str] = set()
    for doc in new_docs:
        if doc.path in seen:
            raise ValueError(f"duplicate document path: {doc.path}")
        seen.add(doc.path)
    replaced = {doc.path for doc in new_docs}
    kept = [c for c in snapshot.chunks if c.source_path not in replaced]
    fresh: list[Chunk] = []
    for doc in new_docs:
        fresh.extend(chunk_document(doc, policy))
    _embed_chunks(fresh, backend)
    return build_snapshot(kept + fresh)


# --- Corpus file parsing ----------------------------------------------------


def parse_corpus_text(text: str, default_path: str) -> SourceDocument:
    """Parse one corpus file body. Front-matter ``path:``/``kind:`` lines are
    optional; content before any unit marker becomes unit 1."""
    path = default_path
    kind = "other"
    units: list[tuple[int, str]] = []
    current_number: int | None = None
    current_lines: list[str] = []
    in_front_matter = True

    def flush():
        if current_number is not None:
            units.append((current_number, "\n".join(current_lines).strip("\n")))

    for line in text.splitlines():
        marker = _UNIT_MARKER.match(line)
        if marker:
            flush()
            current_number = int(marker.group(1))
            current_lines = []
            in_front_matter = False
            continue
        if in_front_matter:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("path:"):
                path = stripped[len("path:"):].strip()
                continue
            if stripped.startswith("kind:"):
                kind = stripped[len("kind:"):].strip()
                continue
            # Body without a unit marker: implicit unit 1.
            in_front_matter = False
            current_number = 1
            current_lines = [line]
            continue
        current_lines.append(line)
    flush()
    return SourceDocument(path=path, kind=kind, units=units)


def parse_corpus_file(file_path: str | Path, corpus_root: str | Path | None = None) -> SourceDocument:
    file_path = Path(file_path)
    default = (
        str(file_path.relative_to(corpus_root)) if corpus_root else file_path.name
    )
    return parse_corpus_text(file_path.read_text(encoding="utf-8"), default_path=default)


def load_corpus_dir(corpus_dir: str | Path) -> list[SourceDocument]:
    """All regular non-hidden files under the directory, sorted by path."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise ValueError(f"corpus directory not found: {corpus_dir}")
    docs = []
    for file_path in sorted(p for p in root.rglob("*") if p.is_file() and not p.name.startswith(".")):
        docs.append(parse_corpus_file(file_path, corpus_root=root))
    return docs
