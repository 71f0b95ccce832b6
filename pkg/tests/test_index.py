import math
import random
import string

import pytest

from tutorkit import gateway as gw
from tutorkit.index import (
    Chunk,
    build_snapshot,
    fuse_rrf,
    keyword_search,
    make_chunk_id,
    rerank,
    retrieve,
    vector_search,
)

# --- Independent oracles (no imports from the implementation path) ---------


def oracle_tokenize(text):
    tokens, word = [], []
    for ch in text.lower():
        if ch in string.punctuation or ch.isspace():
            if word:
                tokens.append("".join(word))
                word = []
        else:
            word.append(ch)
    if word:
        tokens.append("".join(word))
    return tokens


def oracle_bm25_scores(chunk_texts, query, k1=1.2, b=0.75):
    """Direct BM25 evaluation over raw texts, no postings index."""
    docs = [oracle_tokenize(t) for t in chunk_texts]
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n if n else 0.0
    out = []
    for tokens in docs:
        score = 0.0
        for term in dict.fromkeys(oracle_tokenize(query)):
            tf = tokens.count(term)
            if tf == 0:
                continue
            df = sum(1 for d in docs if term in d)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len(tokens) / avgdl))
        out.append(score)
    return out


def oracle_cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def _chunk(text, path="d.txt", unit=1, ordinal=0, embedding=None):
    return Chunk(
        chunk_id=make_chunk_id(path, unit, ordinal, text),
        source_path=path,
        unit_number=unit,
        ordinal=ordinal,
        text=text,
        embedding=embedding or gw.mock_embedding(text, 16),
    )


@pytest.fixture
def cat_snapshot():
    chunks = [
        _chunk("cat sat", unit=1),
        _chunk("cat cat sat", unit=2),
        _chunk("dog", unit=3),
    ]
    return build_snapshot(chunks)


class TestKeywordSearch:
    def test_unique_term_ranks_first(self, course_snapshot):
        results = keyword_search(course_snapshot, "aliasing", k=10)
        assert results[0][0].source_path == "slides/week01_signals.txt"
        assert results[0][0].unit_number == 1

    def test_hand_evaluated_fixture(self, cat_snapshot):
        # idf = ln(1.6); "cat cat sat" outranks "cat sat"; "dog" excluded.
        results = keyword_search(cat_snapshot, "cat", k=10)
        texts = [c.text for c, _ in results]
        scores = [s for _, s in results]
        assert texts == ["cat cat sat", "cat sat"]
        assert scores[0] == pytest.approx(0.5666, abs=5e-5)
        assert scores[1] == pytest.approx(0.4700, abs=5e-5)

    def test_matches_oracle_to_1e9(self, cat_snapshot):
        expected = oracle_bm25_scores([c.text for c in cat_snapshot.chunks], "cat sat dog")
        by_text = dict(zip([c.text for c in cat_snapshot.chunks], expected))
        for chunk, score in keyword_search(cat_snapshot, "cat sat dog", k=10):
            assert score == pytest.approx(by_text[chunk.text], abs=1e-9)

    def test_absent_term_gives_empty(self, cat_snapshot):
        assert keyword_search(cat_snapshot, "zebra", k=10) == []

    def test_at_most_k_results(self, course_snapshot):
        assert len(keyword_search(course_snapshot, "video compression signals", k=1)) == 1

    def test_random_corpus_matches_oracle(self):
        rng = random.Random(42)
        vocab = ["motion", "picture", "codec", "frame", "noise", "filter", "grain", "matte"]
        texts = [
            " ".join(rng.choices(vocab, k=rng.randint(3, 12))) for _ in range(50)
        ]
        snapshot = build_snapshot([_chunk(t, unit=i + 1) for i, t in enumerate(texts)])
        for query in ["motion codec", "grain", "matte filter noise", "absent"]:
            expected = {
                c.chunk_id: s
                for c, s in zip(snapshot.chunks, oracle_bm25_scores([c.text for c in snapshot.chunks], query))
                if s > 0
            }
            got = {c.chunk_id: s for c, s in keyword_search(snapshot, query, k=100)}
            assert set(got) == set(expected)
            for cid, s in got.items():
                assert s == pytest.approx(expected[cid], abs=1e-9)


class TestVectorSearch:
    def test_self_similarity_ranks_first(self, course_snapshot):
        target = course_snapshot.chunks[2]
        results = vector_search(course_snapshot, target.embedding, k=3)
        assert results[0][0].chunk_id == target.chunk_id
        assert results[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_query_scores_zero_ordered_by_id(self):
        chunks = [
            _chunk("a", unit=1, embedding=[1.0, 0.0, 0.0]),
            _chunk("b", unit=2, embedding=[0.0, 1.0, 0.0]),
        ]
        snapshot = build_snapshot(chunks)
        results = vector_search(snapshot, [0.0, 0.0, 1.0], k=5)
        assert [s for _, s in results] == [0.0, 0.0]
        assert [c.chunk_id for c, _ in results] == sorted(c.chunk_id for c in chunks)

    def test_k_larger_than_corpus_returns_all(self, course_snapshot):
        query = gw.mock_embedding("anything", 16)
        assert len(vector_search(course_snapshot, query, k=50)) == len(course_snapshot.chunks)

    def test_dimension_mismatch_rejected(self, course_snapshot):
        with pytest.raises(ValueError):
            vector_search(course_snapshot, [1.0, 2.0], k=3)

    def test_matches_brute_force_exactly(self, course_snapshot):
        query = gw.mock_embedding("sampling video quiz", 16)
        expected = sorted(
            (
                (c.chunk_id, oracle_cosine(query, c.embedding))
                for c in course_snapshot.chunks
            ),
            key=lambda pair: (-pair[1], pair[0]),
        )
        got = [(c.chunk_id, s) for c, s in vector_search(course_snapshot, query, k=100)]
        assert [cid for cid, _ in got] == [cid for cid, _ in expected]
        for (gc, gs), (ec, es) in zip(got, expected):
            assert gs == pytest.approx(es, abs=1e-12)

    def test_ordering_invariant_under_vector_scaling(self, course_snapshot):
        scaled = build_snapshot(
            [
                Chunk(
                    chunk_id=c.chunk_id,
                    source_path=c.source_path,
                    unit_number=c.unit_number,
                    ordinal=c.ordinal,
                    text=c.text,
                    embedding=[3.7 * v for v in c.embedding],
                )
                for c in course_snapshot.chunks
            ]
        )
        query = gw.mock_embedding("bit depth noise", 16)
        original = [c.chunk_id for c, _ in vector_search(course_snapshot, query, k=10)]
        rescaled = [c.chunk_id for c, _ in vector_search(scaled, query, k=10)]
        assert original == rescaled


class TestFuseRrf:
    def test_rank_one_in_both_lists(self):
        chunk = _chunk("shared")
        fused = fuse_rrf([(chunk, 2.0)], [(chunk, 0.9)])
        assert fused[0].fused_score == pytest.approx(2.0 / 61.0, abs=1e-9)
        assert fused[0].keyword_score == 2.0
        assert fused[0].vector_score == 0.9

    def test_keyword_only_contribution(self):
        chunk = _chunk("solo")
        fused = fuse_rrf([(chunk, 1.0)], [])
        assert fused[0].fused_score == pytest.approx(1.0 / 61.0, abs=1e-9)

    def test_empty_lists_fuse_empty(self):
        assert fuse_rrf([], []) == []

    def test_ranks_dense_and_scores_non_increasing(self):
        a, b, c = _chunk("a", unit=1), _chunk("b", unit=2), _chunk("c", unit=3)
        fused = fuse_rrf([(a, 3.0), (b, 2.0), (c, 1.0)], [(b, 0.8), (a, 0.7)])
        assert [r.final_rank for r in fused] == [1, 2, 3]
        scores = [r.fused_score for r in fused]
        assert scores == sorted(scores, reverse=True)


class TestRerank:
    def test_full_overlap_promotes_over_term_free_chunks(self):
        # Rank-3 chunk holds every query term; ranks 1-2 hold none.
        a = _chunk("irrelevant one", unit=1)
        b = _chunk("irrelevant two", unit=2)
        c = _chunk("sampling aliasing explained", unit=3)
        fused = fuse_rrf([(a, 3.0), (b, 2.0), (c, 1.0)], [])
        assert fused[2].chunk.chunk_id == c.chunk_id
        reranked = rerank(fused, "sampling aliasing")
        assert reranked[0].chunk.chunk_id == c.chunk_id

    def test_identity_scorer_keeps_order(self):
        a, b = _chunk("a", unit=1), _chunk("b", unit=2)
        fused = fuse_rrf([(a, 2.0), (b, 1.0)], [])
        reranked = rerank(fused, "whatever", reranker=lambda q, c: 0.0)
        assert [r.chunk.chunk_id for r in reranked] == [r.chunk.chunk_id for r in fused]

    def test_failing_reranker_falls_back_to_fused_order(self, caplog):
        a, b = _chunk("a", unit=1), _chunk("b", unit=2)
        fused = fuse_rrf([(a, 2.0), (b, 1.0)], [])

        def broken(query, chunk):
            raise RuntimeError("scorer exploded")

        reranked = rerank(fused, "q", reranker=broken)
        assert [r.chunk.chunk_id for r in reranked] == [r.chunk.chunk_id for r in fused]
        assert any("reranker failed" in r.message for r in caplog.records)

    def test_empty_input(self):
        assert rerank([], "q") == []


class FixedQueryBackend:
    """Embedding backend returning one fixed vector for any text."""

    def __init__(self, vector):
        self.vector = vector
        self.config = gw.BackendConfig(embedding_dim=len(vector))

    def embed(self, texts):
        return [list(self.vector) for _ in texts]


class FailingEmbedBackend:
    config = gw.BackendConfig()

    def embed(self, texts):
        raise gw.RetriableBackendError("embedding down")


class TestRetrieve:
    def test_self_retrieval(self, course_snapshot, echo_backend):
        target = course_snapshot.chunks[0]
        results, degraded = retrieve(course_snapshot, target.text, echo_backend)
        assert not degraded
        assert results[0].chunk.chunk_id == target.chunk_id

    def test_no_padding_beyond_corpus(self, echo_backend):
        chunks = [_chunk(t, unit=i + 1) for i, t in enumerate(["a b", "c d", "e f", "g h"])]
        snapshot = build_snapshot(chunks)
        results, _ = retrieve(snapshot, "a", echo_backend, k=10)
        assert len(results) == 4
        assert [r.final_rank for r in results] == [1, 2, 3, 4]

    def test_hand_composed_rrf_plus_overlap(self):
        # Keyword and vector rankings disagree; final order follows the
        # hand-computed RRF + 0.5*overlap scores.
        a = _chunk("alpha beta", unit=1, embedding=[1.0, 0.0, 0.0])
        b = _chunk("alpha alpha beta", unit=2, embedding=[0.0, 1.0, 0.0])
        c = _chunk("gamma delta", unit=3, embedding=[0.6, 0.8, 0.0])
        snapshot = build_snapshot([a, b, c])
        backend = FixedQueryBackend([0.0, 1.0, 0.0])
        results, degraded = retrieve(snapshot, "alpha", backend, k=3)
        assert not degraded
        # keyword ranking: b, a; vector ranking: b, c, a
        expected = {
            b.chunk_id: 1 / 61 + 1 / 61 + 0.5,
            a.chunk_id: 1 / 62 + 1 / 63 + 0.5,
            c.chunk_id: 1 / 62,
        }
        assert [r.chunk.chunk_id for r in results] == [b.chunk_id, a.chunk_id, c.chunk_id]
        for r in results:
            assert r.fused_score == pytest.approx(expected[r.chunk.chunk_id], abs=1e-9)

    def test_embedding_failure_degrades_to_keyword_only(self, course_snapshot):
        results, degraded = retrieve(course_snapshot, "sampling theorem", FailingEmbedBackend())
        assert degraded
        assert results
        assert all(r.vector_score == 0.0 for r in results)

    def test_insertion_order_does_not_matter(self, course_snapshot, echo_backend):
        rng = random.Random(7)
        shuffled = list(course_snapshot.chunks)
        rng.shuffle(shuffled)
        other = build_snapshot(shuffled)
        q = "video compression motion"
        left, _ = retrieve(course_snapshot, q, echo_backend)
        right, _ = retrieve(other, q, echo_backend)
        assert [(r.chunk.chunk_id, r.fused_score) for r in left] == [
            (r.chunk.chunk_id, r.fused_score) for r in right
        ]

    def test_fused_scores_non_increasing(self, course_snapshot, echo_backend):
        results, _ = retrieve(course_snapshot, "video signals quiz", echo_backend)
        scores = [r.fused_score for r in results]
        assert scores == sorted(scores, reverse=True)
        assert [r.final_rank for r in results] == list(range(1, len(results) + 1))


class TestSnapshotConstruction:
    def test_duplicate_chunk_ids_rejected(self):
        c = _chunk("same")
        with pytest.raises(ValueError):
            build_snapshot([c, c])

    def test_missing_embedding_rejected(self):
        chunk = Chunk("id1", "p.txt", 1, 0, "text", embedding=None)
        with pytest.raises(ValueError):
            build_snapshot([chunk])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            build_snapshot(
                [
                    _chunk("a", unit=1, embedding=[1.0, 0.0]),
                    _chunk("b", unit=2, embedding=[1.0, 0.0, 0.0]),
                ]
            )

    def test_avg_doc_length_consistent(self, course_snapshot):
        assert course_snapshot.avg_doc_length == pytest.approx(
            sum(course_snapshot.doc_lengths.values()) / len(course_snapshot.doc_lengths)
        )

    def test_postings_and_vectors_cover_chunk_set(self, course_snapshot):
        ids = {c.chunk_id for c in course_snapshot.chunks}
        assert set(course_snapshot.vectors) == ids
        posted = {cid for plist in course_snapshot.postings.values() for cid, _ in plist}
        assert posted == ids
