"""An anonymous tutoring session against the in-process chat service.

Shows the full student workflow without any network or live model: consent
gate, a short conversation with validated citations, the history endpoint's
view, and a snapshot hot-swap that makes new material retrievable while the
service keeps running.
"""

import tempfile
from pathlib import Path

from tutorkit import BackendConfig, build_backend
from tutorkit.ingest import ChunkPolicy, SourceDocument, ingest_corpus
from tutorkit.service import ChatService, ConsentRequiredError, ServiceConfig

workdir = Path(tempfile.mkdtemp(prefix="tutor_service_"))

docs = [
    SourceDocument(
        path="slides/week05_mrf.txt",
        kind="slides",
        units=[
            (1, "A Markov Random Field models local dependencies between pixels."),
            (2, "Graph cuts find the MAP labeling of a binary MRF exactly."),
        ],
    )
]
embed_backend = build_backend(BackendConfig(backend="mock-echo", embedding_dim=32))
snapshot = ingest_corpus(docs, ChunkPolicy(), embed_backend)

# A scripted model: canned, citation-bearing answers keyed on the question.
replies = {
    "what is a Markov Random Field": (
        "An MRF captures local pixel dependencies "
        "[source: slides/week05_mrf.txt | unit 1]. Want the energy formulation?"
    ),
    "how do I solve it": (
        "Binary labelings are solved exactly with graph cuts "
        "[source: slides/week05_mrf.txt | unit 2] "
        "and fabricated reading in [source: slides/week99.txt | unit 1]."
    ),
}
backend = build_backend(
    BackendConfig(
        backend="mock-scripted",
        embedding_dim=32,
        scripted_replies=replies,
        scripted_default="Let us look at that together. Which part is unclear?",
    )
)

service = ChatService(
    snapshot,
    backend,
    ServiceConfig(
        database_path=str(workdir / "chat.db"),
        query_log_path=str(workdir / "queries.jsonl"),
    ),
)

# --- consent gate ------------------------------------------------------------

try:
    service.create_session(consent=False)
except ConsentRequiredError as exc:
    print(f"without consent: rejected ({str(exc)[:60]}...)")

token = service.create_session(consent=True).token
print(f"with consent: session {token[:8]}... created\n")

# --- conversation ------------------------------------------------------------

for question in ["what is a Markov Random Field", "how do I solve it", "thanks!"]:
    response = service.post_message(token, question)
    print(f"student : {question}")
    print(f"tutor   : {response['reply'][:90]}")
    for c in response["citations"]:
        print(f"          cited {c['source_path']} unit {c['unit_number']}")
    print()

# The second reply fabricated a citation; it was stripped and counted.
second = service.get_history(token)[1]
print(f"turn 2 citation violations stripped: {second.violations}")

# --- history survives because every turn is persisted before replying --------

print("\nhistory view:")
for turn in service.get_history(token):
    print(f"  #{turn.turn_id} {turn.query!r} -> {turn.reply[:40]!r}")

# --- hot swap: lecturers update materials mid-deployment ----------------------

new_docs = docs + [
    SourceDocument(
        path="slides/week06_belief.txt",
        kind="slides",
        units=[(1, "Loopy belief propagation approximates MRF inference.")],
    )
]
service.swap_snapshot(ingest_corpus(new_docs, ChunkPolicy(), embed_backend))
print(f"\nswapped snapshot: now {len(service.snapshot.chunks)} chunks, service uninterrupted")
print(f"health: {service.health()['status']}, hash {service.health()['snapshot_hash'][:12]}...")
