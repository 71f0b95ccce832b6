"""From raw course files to ranked, citable excerpts.

Walks the indexing path end to end: write two course documents in the
unit-marked text format, ingest them into a hybrid snapshot with the
deterministic mock embedder, then retrieve with per-stage scores.
"""

import tempfile
from pathlib import Path

from tutorkit import BackendConfig, build_backend
from tutorkit.index import load_snapshot, retrieve, save_snapshot
from tutorkit.ingest import ChunkPolicy, ingest_corpus, load_corpus_dir

backend = build_backend(BackendConfig(backend="mock-echo", embedding_dim=32))

# --- 1. A tiny corpus on disk, one file per document ------------------------

corpus_dir = Path(tempfile.mkdtemp(prefix="tutor_corpus_"))

(corpus_dir / "week03.txt").write_text(
    """path: slides/week03_motion.txt
kind: slides

=== unit 1 ===
Motion estimation finds the displacement between frames.
Block matching minimizes a distortion measure over candidate vectors.
=== unit 2 ===
Optical flow assumes brightness constancy and solves for a dense field.
=== unit 3 ===
Motion compensated prediction subtracts the predicted block before coding.
"""
)

(corpus_dir / "announcements.txt").write_text(
    """path: notes/announcements.txt
kind: announcement

=== unit 1 ===
The second quiz takes place on March 19 and notes are permitted.
"""
)

docs = load_corpus_dir(corpus_dir)
print(f"parsed {len(docs)} documents:")
for doc in docs:
    print(f"  {doc.path} ({doc.kind}, {len(doc.units)} units)")

# --- 2. Ingest: chunk, embed, build the immutable snapshot ------------------

snapshot = ingest_corpus(docs, ChunkPolicy(max_chars=2000, overlap_chars=200), backend)
print(f"\nsnapshot: {len(snapshot.chunks)} chunks, hash {snapshot.content_hash[:12]}...")

snap_path = corpus_dir / "snapshot.json"
save_snapshot(snapshot, snap_path)
snapshot = load_snapshot(snap_path)  # round-trips byte-identically
print(f"round-tripped through {snap_path.name}")

# --- 3. Retrieve: BM25 + cosine, fused by reciprocal rank, reranked ---------

for query in ["how does block matching work", "when is the quiz"]:
    print(f"\nquery: {query!r}")
    results, degraded = retrieve(snapshot, query, backend, k=3)
    for r in results:
        print(
            f"  #{r.final_rank}  kw={r.keyword_score:.3f} vec={r.vector_score:.3f} "
            f"fused={r.fused_score:.4f}  {r.chunk.source_path} unit {r.chunk.unit_number}"
        )
        print(f"      {r.chunk.text.splitlines()[0][:70]}")
