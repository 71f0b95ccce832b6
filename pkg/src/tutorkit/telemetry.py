"""Privacy-reduced usage telemetry and its batch aggregations.

One QueryLogRecord is written per answered query. Records carry a one-way
hash of the session token and token counts only; the query text itself is
excluded unless content retention is explicitly switched on. Aggregations
are pure functions over immutable record lists, so they can run against a
log file while the service keeps appending to it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .gateway import PriceTable, count_cost
from .orchestrator import ConversationTurn


class DataIntegrityError(ValueError):
    """The log contradicts itself (e.g. queries without any session)."""


@dataclass
class QueryLogRecord:
    timestamp: datetime
    session_token_hash: str
    prompt_tokens: int
    completion_tokens: int
    degraded: bool = False
    violations: int = 0
    query_text: str | None = None  # populated only when retention is enabled

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.violations < 0:
            raise ValueError("violations must be non-negative")


def hash_session_token(token: str) -> str:
    """One-way hash used in telemetry instead of the raw session token."""
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


def record_from_turn(
    turn: ConversationTurn, session_token: str, retain_query: bool = False
) -> QueryLogRecord:
    return QueryLogRecord(
        timestamp=turn.timestamp,
        session_token_hash=hash_session_token(session_token),
        prompt_tokens=turn.prompt_tokens,
        completion_tokens=turn.completion_tokens,
        degraded=turn.degraded,
        violations=turn.violations,
        query_text=turn.query if retain_query else None,
    )


def record_to_json(record: QueryLogRecord) -> str:
    data = {
        "timestamp": record.timestamp.astimezone(timezone.utc).isoformat(),
        "session_token_hash": record.session_token_hash,
        "prompt_tokens": record.prompt_tokens,
        "completion_tokens": record.completion_tokens,
        "degraded": record.degraded,
        "violations": record.violations,
    }
    if record.query_text is not None:
        data["query_text"] = record.query_text
    return json.dumps(data)


def record_from_json(line: str) -> QueryLogRecord:
    data = json.loads(line)
    ts = data["timestamp"].replace("Z", "+00:00")
    return QueryLogRecord(
        timestamp=datetime.fromisoformat(ts),
        session_token_hash=data["session_token_hash"],
        prompt_tokens=data["prompt_tokens"],
        completion_tokens=data["completion_tokens"],
        degraded=data.get("degraded", False),
        violations=data.get("violations", 0),
        query_text=data.get("query_text"),
    )


def append_record(path: str | Path, record: QueryLogRecord) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(record_to_json(record) + "\n")


def read_log(path: str | Path) -> list[QueryLogRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(record_from_json(line))
    return records


@dataclass
class UsageSummary:
    total_queries: int
    total_sessions: int
    queries_per_session: float
    queries_per_student: float
    span_days: int


def _local_date(ts: datetime, timezone_offset_minutes: int) -> date:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return (ts.astimezone(timezone.utc) + timedelta(minutes=timezone_offset_minutes)).date()


def daily_counts(
    log: Sequence[QueryLogRecord], timezone_offset_minutes: int = 0
) -> list[tuple[date, int]]:
    """Query count per local calendar date, zero-filled across the observed
    span so quiet days show up explicitly."""
    if not log:
        return []
    counts: dict[date, int] = {}
    for record in log:
        d = _local_date(record.timestamp, timezone_offset_minutes)
        counts[d] = counts.get(d, 0) + 1
    first, last = min(counts), max(counts)
    out = []
    d = first
    while d <= last:
        out.append((d, counts.get(d, 0)))
        d += timedelta(days=1)
    return out


def usage_summary(log: Sequence[QueryLogRecord], cohort_size: int) -> UsageSummary:
    """Engagement totals. queries_per_student is raw; round to one decimal
    at display time."""
    if cohort_size <= 0:
        raise ValueError("cohort_size must be positive")
    total = len(log)
    sessions = len({r.session_token_hash for r in log if r.session_token_hash})
    if sessions == 0 and total > 0:
        raise DataIntegrityError("log has queries but no session hashes")
    dates = [(_local_date(r.timestamp, 0)) for r in log]
    span = (max(dates) - min(dates)).days + 1 if dates else 0
    return UsageSummary(
        total_queries=total,
        total_sessions=sessions,
        queries_per_session=total / sessions if sessions else 0.0,
        queries_per_student=total / cohort_size,
        span_days=span,
    )


def peak_share(
    log: Sequence[QueryLogRecord], day: date, timezone_offset_minutes: int = 0
) -> dict:
    """Share of all queries that landed on one calendar date."""
    total = len(log)
    if total == 0:
        raise DataIntegrityError("share is undefined for an empty log")
    day_queries = sum(
        1 for r in log if _local_date(r.timestamp, timezone_offset_minutes) == day
    )
    return {
        "day_queries": day_queries,
        "total_queries": total,
        "share": day_queries / total,
    }


def cost_report(
    log: Sequence[QueryLogRecord], fixed_cost: float, price_table: PriceTable
) -> dict:
    """Deployment cost accounting: fixed infrastructure plus per-token usage."""
    queries = len(log)
    if queries == 0:
        raise DataIntegrityError("cost per query is undefined for an empty log")
    token_cost = count_cost(
        [(r.prompt_tokens, r.completion_tokens) for r in log], price_table
    )
    return {
        "total_cost": fixed_cost + token_cost,
        "token_cost": token_cost,
        "per_query_cost": (fixed_cost + token_cost) / queries,
        "token_per_query_cost": token_cost / queries,
    }
