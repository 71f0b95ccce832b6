import logging

import pytest
from hypothesis import given, strategies as st

from tutorkit import gateway as gw
from tutorkit.index import load_snapshot, save_snapshot
from tutorkit.ingest import (
    ChunkPolicy,
    SourceDocument,
    chunk_document,
    ingest_corpus,
    load_corpus_dir,
    parse_corpus_text,
    update_corpus,
)


def _doc(units, path="doc.txt", kind="other"):
    return SourceDocument(path=path, kind=kind, units=units)


class TestPolicyAndDocumentInvariants:
    def test_overlap_must_be_smaller_than_max(self):
        with pytest.raises(ValueError):
            ChunkPolicy(max_chars=100, overlap_chars=100)

    def test_unit_numbers_strictly_increasing(self):
        with pytest.raises(ValueError):
            _doc([(1, "a"), (1, "b")])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            _doc([(1, "a")], kind="pdf")


class TestChunkDocument:
    def test_one_chunk_per_small_slide(self):
        doc = _doc([(1, "a" * 500), (2, "b" * 500), (3, "c" * 500)], kind="slides")
        chunks = chunk_document(doc, ChunkPolicy())
        assert [(c.unit_number, c.ordinal) for c in chunks] == [(1, 0), (2, 0), (3, 0)]

    def test_sliding_windows_cover_long_unit(self):
        # 2500 chars, max 1000, overlap 200: windows [0,1000), [800,1800), [1600,2500)
        text = "".join(chr(ord("a") + (i % 26)) for i in range(2500))
        doc = _doc([(1, text)])
        chunks = chunk_document(doc, ChunkPolicy(max_chars=1000, overlap_chars=200))
        assert len(chunks) == 3
        assert chunks[0].text == text[0:1000]
        assert chunks[1].text == text[800:1800]
        assert chunks[2].text == text[1600:2500]
        assert [c.ordinal for c in chunks] == [0, 1, 2]

    def test_unit_exactly_max_chars_is_one_chunk(self):
        doc = _doc([(1, "x" * 1000)])
        chunks = chunk_document(doc, ChunkPolicy(max_chars=1000, overlap_chars=200))
        assert len(chunks) == 1

    def test_zero_units_gives_empty_list(self):
        assert chunk_document(_doc([]), ChunkPolicy()) == []

    def test_empty_unit_skipped_with_warning(self, caplog):
        doc = _doc([(1, "content here"), (2, "   ")])
        with caplog.at_level(logging.WARNING):
            chunks = chunk_document(doc, ChunkPolicy())
        assert [c.unit_number for c in chunks] == [1]
        assert any("empty unit" in r.message for r in caplog.records)

    def test_no_chunk_spans_two_units(self):
        doc = _doc([(1, "a" * 1200), (2, "b" * 1200)])
        chunks = chunk_document(doc, ChunkPolicy(max_chars=1000, overlap_chars=100))
        for c in chunks:
            assert len(set(c.text)) == 1

    def test_chunk_ids_stable_across_calls(self):
        doc = _doc([(1, "stable content")])
        a = chunk_document(doc, ChunkPolicy())
        b = chunk_document(doc, ChunkPolicy())
        assert [c.chunk_id for c in a] == [c.chunk_id for c in b]

    @given(
        text=st.text(min_size=1, max_size=400).filter(lambda t: t.strip()),
        max_chars=st.integers(10, 120),
        overlap=st.integers(0, 9),
    )
    def test_coverage_reconstructs_unit_text(self, text, max_chars, overlap):
        # Concatenating a unit's chunks with overlaps deduplicated gives back
        # the unit text exactly.
        policy = ChunkPolicy(max_chars=max_chars, overlap_chars=overlap)
        chunks = chunk_document(_doc([(1, text)]), policy)
        rebuilt = chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])
        assert rebuilt == text
        for c in chunks:
            assert 0 < len(c.text) <= max_chars


class TestIngestCorpus:
    def test_snapshot_counts_on_fixture_corpus(self, course_docs, echo_backend):
        # 3 + 2 + 1 single-window units -> 6 chunks, 6 vectors
        snapshot = ingest_corpus(course_docs, ChunkPolicy(), echo_backend)
        assert len(snapshot.chunks) == 6
        assert len(snapshot.vectors) == 6
        terms = set()
        for doc in course_docs:
            for _, text in doc.units:
                terms.update(text.lower().split())
        assert set(snapshot.postings) == terms

    def test_empty_corpus_is_valid(self, echo_backend):
        snapshot = ingest_corpus([], ChunkPolicy(), echo_backend)
        assert snapshot.chunks == ()

    def test_duplicate_path_rejected(self, echo_backend):
        docs = [_doc([(1, "a")], path="same.txt"), _doc([(1, "b")], path="same.txt")]
        with pytest.raises(ValueError, match="same.txt"):
            ingest_corpus(docs, ChunkPolicy(), echo_backend)

    def test_embedding_failure_aborts_whole_ingest(self, course_docs):
        class FailingBackend:
            config = gw.BackendConfig()

            def embed(self, texts):
                raise gw.RetriableBackendError("down")

        with pytest.raises(gw.RetriableBackendError):
            ingest_corpus(course_docs, ChunkPolicy(), FailingBackend())

    def test_content_hash_deterministic(self, course_docs, echo_backend):
        a = ingest_corpus(course_docs, ChunkPolicy(), echo_backend)
        b = ingest_corpus(list(reversed(course_docs)), ChunkPolicy(), echo_backend)
        assert a.content_hash == b.content_hash

    def test_snapshot_round_trips_through_file(self, course_snapshot, tmp_path):
        path = tmp_path / "snap.json"
        save_snapshot(course_snapshot, path)
        loaded = load_snapshot(path)
        assert loaded.content_hash == course_snapshot.content_hash
        assert loaded.created_at == course_snapshot.created_at
        assert loaded.chunks == course_snapshot.chunks
        assert loaded.vectors == course_snapshot.vectors


class TestUpdateCorpus:
    def test_replacement_swaps_all_chunks_of_path(self, course_docs, echo_backend):
        snapshot = ingest_corpus(course_docs, ChunkPolicy(), echo_backend)
        replacement = _doc(
            [(1, "new slide one"), (2, "new slide two"), (3, "new slide three")],
            path="slides/week02_video.txt",
            kind="slides",
        )
        updated = update_corpus(snapshot, [replacement], ChunkPolicy(), echo_backend)
        assert len(updated.chunks) == len(snapshot.chunks) + 1
        old_ids = {c.chunk_id for c in snapshot.chunks if c.source_path == replacement.path}
        assert old_ids.isdisjoint({c.chunk_id for c in updated.chunks})
        assert snapshot.chunks != updated.chunks  # original untouched

    def test_empty_update_is_content_equal(self, course_snapshot, echo_backend):
        updated = update_corpus(course_snapshot, [], ChunkPolicy(), echo_backend)
        assert updated.content_hash == course_snapshot.content_hash

    def test_new_path_grows_snapshot(self, course_snapshot, echo_backend):
        extra = _doc([(1, "brand new announcement")], path="notes/new.txt", kind="announcement")
        updated = update_corpus(course_snapshot, [extra], ChunkPolicy(), echo_backend)
        assert len(updated.chunks) == len(course_snapshot.chunks) + 1
        assert {c.chunk_id for c in course_snapshot.chunks} <= {c.chunk_id for c in updated.chunks}

    def test_replacement_idempotent(self, course_snapshot, echo_backend):
        doc = _doc([(1, "replacement text")], path="slides/week01_signals.txt", kind="slides")
        once = update_corpus(course_snapshot, [doc], ChunkPolicy(), echo_backend)
        twice = update_corpus(once, [doc], ChunkPolicy(), echo_backend)
        assert once.content_hash == twice.content_hash


class TestCorpusFileFormat:
    def test_front_matter_and_units(self):
        text = (
            "path: slides/week1.txt\n"
            "kind: slides\n"
            "\n"
            "=== unit 1 ===\n"
            "First slide.\n"
            "=== unit 2 ===\n"
            "Second slide.\n"
        )
        doc = parse_corpus_text(text, default_path="fallback.txt")
        assert doc.path == "slides/week1.txt"
        assert doc.kind == "slides"
        assert doc.units == [(1, "First slide."), (2, "Second slide.")]

    def test_body_without_markers_is_unit_one(self):
        doc = parse_corpus_text("kind: transcript\nhello there\nmore text\n", "t.txt")
        assert doc.kind == "transcript"
        assert doc.units == [(1, "hello there\nmore text")]

    def test_default_path_used_when_missing(self):
        doc = parse_corpus_text("=== unit 1 ===\nx\n", "notes/d.txt")
        assert doc.path == "notes/d.txt"

    def test_load_corpus_dir(self, tmp_path):
        (tmp_path / "a.txt").write_text("=== unit 1 ===\nalpha\n")
        sub = tmp_path / "sub"
        sub.mkdir()
        (sub / "b.txt").write_text("path: custom/b.txt\n=== unit 1 ===\nbeta\n")
        docs = load_corpus_dir(tmp_path)
        assert [d.path for d in docs] == ["a.txt", "custom/b.txt"]
