"""Anonymous-session chat service with relational persistence.

Sessions are identified by 128-bit random URL-safe tokens and nothing else;
the schema deliberately has no place for names, emails or student numbers.
A session is created only after the consent checkbox is acknowledged. Turns
are persisted transactionally before the reply is returned, so anything the
client has seen survives a restart. The index snapshot is replaced by an
atomic reference swap: turns already in flight finish on the snapshot they
started with.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import telemetry
from .gateway import BackendConfig, build_backend
from .index import IndexSnapshot, load_snapshot
from .orchestrator import (
    Citation,
    ConversationTurn,
    DEFAULT_REWRITE_RULES,
    PromptTemplate,
    SafetyRewriteRule,
    handle_turn,
    load_rewrite_rules,
    load_template,
)

logger = logging.getLogger(__name__)

PRIVACY_NOTICE = "Do not disclose any information which could identify an individual"

CONSENT_TEXT = (
    "Use of this assistant is voluntary and anonymous. By ticking the box you "
    "acknowledge that you have read the participant information and that "
    "conversations are stored without any identifying data. "
    + PRIVACY_NOTICE
    + "."
)


class ServiceError(Exception):
    status = 500


class ConsentRequiredError(ServiceError):
    status = 403


class UnknownSessionError(ServiceError):
    status = 401


class InvalidMessageError(ServiceError):
    status = 400


class RateLimitedError(ServiceError):
    status = 429


class SnapshotRejectedError(ServiceError):
    status = 400


class AdminUnauthorizedError(ServiceError):
    status = 403


MAX_MESSAGE_CHARS = 4000


@dataclass
class Session:
    token: str
    created_at: datetime
    consent_acknowledged: bool
    turns: list[ConversationTurn] = field(default_factory=list)


@dataclass
class ServiceConfig:
    port: int = 8000
    admin_key_env: str = "TUTORKIT_ADMIN_KEY"
    history_limit: int = 10
    k: int = 10
    template_path: str | None = None
    rules_path: str | None = None
    privacy_notice: str = PRIVACY_NOTICE
    database_path: str = "tutorkit.db"
    query_log_path: str | None = None
    messages_per_minute: int = 0  # 0 disables the cap
    session_ttl_seconds: int = 0  # 0 means sessions never expire
    retain_query_text: bool = False
    static_dir: str | None = None


def load_service_config(path: str | Path) -> tuple[ServiceConfig, BackendConfig]:
    """One JSON file configures both the service and its backend."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    backend_data = data.pop("backend", {})
    service = ServiceConfig(**data)
    backend = BackendConfig(**backend_data)
    return service, backend


class ConversationStore:
    """SQLite-backed persistence for sessions and turns.

    The schema is the privacy boundary: a session is a random token and its
    turns, nothing more. One connection guarded by a lock keeps writes
    transactional across service threads.
    """

    def __init__(self, database_path: str | Path):
        self._conn = sqlite3.connect(str(database_path), check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock, self._conn:
            self._conn.execute(
                """CREATE TABLE IF NOT EXISTS sessions (
                    token TEXT PRIMARY KEY,
                    created_at TEXT NOT NULL,
                    consent INTEGER NOT NULL
                )"""
            )
            self._conn.execute(
                """CREATE TABLE IF NOT EXISTS turns (
                    session_token TEXT NOT NULL REFERENCES sessions(token),
                    turn_id INTEGER NOT NULL,
                    query TEXT NOT NULL,
                    reply TEXT NOT NULL,
                    citations TEXT NOT NULL,
                    timestamp TEXT NOT NULL,
                    prompt_tokens INTEGER NOT NULL,
                    completion_tokens INTEGER NOT NULL,
                    degraded INTEGER NOT NULL,
                    violations INTEGER NOT NULL,
                    PRIMARY KEY (session_token, turn_id)
                )"""
            )

    def close(self) -> None:
        self._conn.close()

    def column_names(self) -> dict[str, list[str]]:
        """Schema audit hook: table -> column names."""
        out = {}
        with self._lock:
            for table in ("sessions", "turns"):
                rows = self._conn.execute(f"PRAGMA table_info({table})").fetchall()
                out[table] = [r[1] for r in rows]
        return out

    def add_session(self, session: Session) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO sessions (token, created_at, consent) VALUES (?, ?, ?)",
                (session.token, session.created_at.isoformat(), int(session.consent_acknowledged)),
            )

    def get_session(self, token: str) -> Session | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT token, created_at, consent FROM sessions WHERE token = ?", (token,)
            ).fetchone()
        if row is None:
            return None
        session = Session(
            token=row[0],
            created_at=datetime.fromisoformat(row[1]),
            consent_acknowledged=bool(row[2]),
        )
        session.turns = self.list_turns(token)
        return session

    def append_turn(self, token: str, turn: ConversationTurn) -> None:
        citations = json.dumps(
            [
                {"source_path": c.source_path, "unit_number": c.unit_number, "chunk_id": c.chunk_id}
                for c in turn.citations
            ]
        )
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO turns VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    token,
                    turn.turn_id,
                    turn.query,
                    turn.reply,
                    citations,
                    turn.timestamp.isoformat(),
                    turn.prompt_tokens,
                    turn.completion_tokens,
                    int(turn.degraded),
                    turn.violations,
                ),
            )

    def list_turns(self, token: str) -> list[ConversationTurn]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT turn_id, query, reply, citations, timestamp, prompt_tokens,"
                " completion_tokens, degraded, violations FROM turns"
                " WHERE session_token = ? ORDER BY turn_id",
                (token,),
            ).fetchall()
        turns = []
        for row in rows:
            turns.append(
                ConversationTurn(
                    turn_id=row[0],
                    query=row[1],
                    reply=row[2],
                    citations=[Citation(**c) for c in json.loads(row[3])],
                    timestamp=datetime.fromisoformat(row[4]),
                    prompt_tokens=row[5],
                    completion_tokens=row[6],
                    degraded=bool(row[7]),
                    violations=row[8],
                )
            )
        return turns

    def query_log_records(self) -> list[telemetry.QueryLogRecord]:
        """Telemetry view over persisted turns (tokens hashed on the way out)."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT session_token, timestamp, prompt_tokens, completion_tokens,"
                " degraded, violations FROM turns ORDER BY timestamp"
            ).fetchall()
        return [
            telemetry.QueryLogRecord(
                timestamp=datetime.fromisoformat(row[1]),
                session_token_hash=telemetry.hash_session_token(row[0]),
                prompt_tokens=row[2],
                completion_tokens=row[3],
                degraded=bool(row[4]),
                violations=row[5],
            )
            for row in rows
        ]


class ChatService:
    """The server side of the tutor: session registry, per-session turn
    serialization, snapshot hot-swap and telemetry emission."""

    def __init__(
        self,
        snapshot: IndexSnapshot,
        backend,
        config: ServiceConfig,
        store: ConversationStore | None = None,
        template: PromptTemplate | None = None,
        rules: list[SafetyRewriteRule] | None = None,
        clock=None,
    ):
        self.config = config
        self.backend = backend
        self.store = store or ConversationStore(config.database_path)
        if template is None:
            template = (
                load_template(config.template_path) if config.template_path else PromptTemplate()
            )
        self.template = template
        if rules is None:
            rules = (
                load_rewrite_rules(config.rules_path)
                if config.rules_path
                else list(DEFAULT_REWRITE_RULES)
            )
        self.rules = rules
        self._snapshot = snapshot
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._post_times: dict[str, list[float]] = {}
        self._started = time.monotonic()
        self._clock = clock or (lambda: datetime.now(timezone.utc))

    # -- sessions ------------------------------------------------------------

    def create_session(self, consent: bool) -> Session:
        if not consent:
            raise ConsentRequiredError(CONSENT_TEXT)
        session = Session(
            token=secrets.token_urlsafe(16),
            created_at=self._clock(),
            consent_acknowledged=True,
        )
        self.store.add_session(session)
        with self._registry_lock:
            self._sessions[session.token] = session
            self._locks[session.token] = threading.Lock()
        return session

    def _get_session(self, token: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(token)
        if session is None:
            session = self.store.get_session(token)
            if session is None:
                raise UnknownSessionError("unknown session token")
            with self._registry_lock:
                session = self._sessions.setdefault(token, session)
                self._locks.setdefault(token, threading.Lock())
        if self.config.session_ttl_seconds > 0:
            age = (self._clock() - session.created_at).total_seconds()
            if age > self.config.session_ttl_seconds:
                raise UnknownSessionError("session expired")
        return session

    def _session_lock(self, token: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks[token]

    # -- chat ----------------------------------------------------------------

    def _check_rate(self, token: str) -> None:
        cap = self.config.messages_per_minute
        if cap <= 0:
            return
        now = time.monotonic()
        times = self._post_times.setdefault(token, [])
        times[:] = [t for t in times if now - t < 60.0]
        if len(times) >= cap:
            raise RateLimitedError("messages-per-minute cap reached")
        times.append(now)

    def post_message(self, token: str, text: str) -> dict:
        if not text or not text.strip():
            raise InvalidMessageError("message must be non-empty")
        if len(text) > MAX_MESSAGE_CHARS:
            raise InvalidMessageError(f"message exceeds {MAX_MESSAGE_CHARS} characters")
        session = self._get_session(token)
        with self._session_lock(token):
            self._check_rate(token)
            snapshot = self._snapshot  # pinned for the whole turn
            turn = handle_turn(
                session,
                text,
                snapshot,
                self.template,
                self.rules,
                self.backend,
                now=self._clock(),
                k=self.config.k,
                history_limit=self.config.history_limit,
            )
            try:
                self.store.append_turn(token, turn)
                self._emit_log(token, turn)
            except Exception:
                session.turns.pop()
                raise
        return {
            "turn_id": turn.turn_id,
            "reply": turn.reply,
            "citations": [
                {"source_path": c.source_path, "unit_number": c.unit_number}
                for c in turn.citations
            ],
            "degraded": turn.degraded,
            "privacy_notice": self.config.privacy_notice,
        }

    def _emit_log(self, token: str, turn: ConversationTurn) -> None:
        if not self.config.query_log_path:
            return
        record = telemetry.record_from_turn(
            turn, token, retain_query=self.config.retain_query_text
        )
        telemetry.append_record(self.config.query_log_path, record)

    def get_history(self, token: str) -> list[ConversationTurn]:
        session = self._get_session(token)
        with self._session_lock(token):
            return list(session.turns)

    # -- snapshot management ---------------------------------------------------

    @property
    def snapshot(self) -> IndexSnapshot:
        return self._snapshot

    def swap_snapshot(self, new_snapshot: IndexSnapshot) -> dict:
        if not isinstance(new_snapshot, IndexSnapshot):
            raise SnapshotRejectedError("not an index snapshot")
        self._snapshot = new_snapshot  # atomic reference swap
        return {"ok": True, "snapshot_hash": new_snapshot.content_hash}

    def swap_snapshot_from_file(self, path: str | Path) -> dict:
        try:
            new_snapshot = load_snapshot(path)
        except ValueError as exc:
            raise SnapshotRejectedError(str(exc)) from exc
        return self.swap_snapshot(new_snapshot)

    def health(self) -> dict:
        return {
            "status": "ok",
            "snapshot_hash": self._snapshot.content_hash,
            "uptime_s": time.monotonic() - self._started,
        }


def build_service(
    service_config: ServiceConfig,
    backend_config: BackendConfig,
    snapshot_path: str | Path,
) -> ChatService:
    snapshot = load_snapshot(snapshot_path)
    backend = build_backend(backend_config)
    return ChatService(snapshot, backend, service_config)


# --- HTTP layer ---------------------------------------------------------------


def create_app(service: ChatService):
    """FastAPI app exposing the JSON API (and the static chat client when a
    static directory is configured)."""
    from fastapi import Body, FastAPI, Header, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="tutorkit chat service", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": str(exc)})

    @app.post("/api/session")
    def create_session(payload: dict = Body(...)):
        session = service.create_session(bool(payload.get("consent", False)))
        return {"token": session.token, "privacy_notice": service.config.privacy_notice}

    @app.post("/api/chat")
    def chat(payload: dict = Body(...)):
        token = payload.get("token", "")
        message = payload.get("message", "")
        if not isinstance(message, str):
            raise InvalidMessageError("message must be text")
        return service.post_message(token, message)

    @app.get("/api/history")
    def history(token: str = ""):
        turns = service.get_history(token)
        return {
            "turns": [
                {
                    "turn_id": t.turn_id,
                    "query": t.query,
                    "reply": t.reply,
                    "citations": [
                        {"source_path": c.source_path, "unit_number": c.unit_number}
                        for c in t.citations
                    ],
                    "timestamp": t.timestamp.isoformat(),
                    "degraded": t.degraded,
                }
                for t in turns
            ]
        }

    @app.post("/api/admin/snapshot")
    def admin_snapshot(payload: dict = Body(...), x_admin_key: str = Header(default="")):
        expected = os.environ.get(service.config.admin_key_env, "")
        if not expected or x_admin_key != expected:
            raise AdminUnauthorizedError("admin key missing or wrong")
        return service.swap_snapshot_from_file(payload.get("path", ""))

    @app.get("/api/health")
    def health():
        return service.health()

    static_dir = service.config.static_dir
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app
