"""tutorkit: a self-hostable RAG course tutor.

Course materials go in through `ingest`, retrieval runs over an immutable
hybrid index (`index`), the `orchestrator` turns queries into grounded,
cited replies, `service` serves anonymous chat sessions over HTTP, and
`telemetry`/`stats` reproduce the deployment's usage accounting and study
statistics.
"""

from .gateway import (
    BackendConfig,
    ChatRequest,
    ChatResponse,
    PriceTable,
    build_backend,
    chat,
    count_cost,
    embed,
)
from .index import (
    Chunk,
    IndexSnapshot,
    RetrievalResult,
    build_snapshot,
    fuse_rrf,
    keyword_search,
    load_snapshot,
    rerank,
    retrieve,
    save_snapshot,
    vector_search,
)
from .ingest import (
    ChunkPolicy,
    SourceDocument,
    chunk_document,
    ingest_corpus,
    load_corpus_dir,
    update_corpus,
)
from .orchestrator import (
    Citation,
    ConversationTurn,
    PromptTemplate,
    SafetyRewriteRule,
    apply_rewrite_rules,
    assemble_prompt,
    handle_turn,
    validate_citations,
    window_history,
)
from .service import ChatService, ConversationStore, ServiceConfig, create_app
from .stats import (
    LikertResponses,
    PairedSamples,
    comparison_table,
    delta_percent,
    likert_stats,
    paired_permutation_test,
)
from .telemetry import (
    QueryLogRecord,
    UsageSummary,
    cost_report,
    daily_counts,
    peak_share,
    usage_summary,
)

__version__ = "0.1.0"
