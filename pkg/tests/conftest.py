import pytest

from tutorkit.gateway import BackendConfig, build_backend
from tutorkit.ingest import ChunkPolicy, SourceDocument, ingest_corpus

DIM = 16


@pytest.fixture
def echo_backend():
    return build_backend(BackendConfig(backend="mock-echo", embedding_dim=DIM))


@pytest.fixture
def scripted_backend_factory():
    def make(replies, default="I do not know.", filtered=()):
        return build_backend(
            BackendConfig(
                backend="mock-scripted",
                embedding_dim=DIM,
                scripted_replies=replies,
                scripted_default=default,
                scripted_filtered=frozenset(filtered),
            )
        )

    return make


@pytest.fixture
def course_docs():
    return [
        SourceDocument(
            path="slides/week01_signals.txt",
            kind="slides",
            units=[
                (1, "Sampling theorem and aliasing in digital signals"),
                (2, "Quantization noise and bit depth tradeoffs"),
                (3, "Discrete Fourier transform basics and windowing"),
            ],
        ),
        SourceDocument(
            path="slides/week02_video.txt",
            kind="slides",
            units=[
                (1, "Video compression with motion estimation and residual coding"),
                (2, "Chroma subsampling formats for streaming video"),
            ],
        ),
        SourceDocument(
            path="notes/announcement_exam.txt",
            kind="announcement",
            units=[(1, "The second quiz takes place on March 19 in the usual room")],
        ),
    ]


@pytest.fixture
def course_snapshot(course_docs, echo_backend):
    return ingest_corpus(course_docs, ChunkPolicy(), echo_backend)
