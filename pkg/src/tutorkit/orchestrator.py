"""Query-to-reply pipeline: preprocess, retrieve, prompt, infer, validate.

The pipeline rewrites phrases that are known to trip upstream content-safety
filters, injects the current date and time so schedule questions can be
answered, assembles the tutoring prompt from retrieved chunks plus windowed
conversation history, calls the chat backend, and finally validates that
every citation in the reply names a source actually retrieved for the turn.
Citations pointing anywhere else are stripped and counted, never trusted.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import gateway as gw
from .index import IndexSnapshot, RetrievalResult, retrieve

logger = logging.getLogger(__name__)

PLACEHOLDERS = ("context", "history", "question", "current_datetime")

APOLOGY_REPLY = (
    "Sorry, I cannot answer that request as phrased. "
    "Please rephrase your question and try again."
)

DEFAULT_TEMPLATE = """You are the course teaching assistant. Ground every answer in the course materials below; if they do not cover the question, say so plainly instead of guessing.

Current date and time: {current_datetime}
Use it to reason about schedules, deadlines and anything time-dependent.

Course materials:
{context}

Conversation so far:
{history}

How to tutor:
- Encourage deeper understanding by posing a follow-up question where it helps, e.g. "Are you interested in the mathematical formula or the practical application?".
- Guide the student step by step instead of just stating the answer.
- Provide worked examples where relevant.
- When the student builds on earlier questions, recall the previous interactions and summarize the key points before continuing.
- Write answers in markdown and use LaTeX for mathematics.
- Cite every source you draw on, with its full path, in exactly this form: [source: <source_path> | unit <unit_number>]. Cite only sources listed under "Course materials" above.

Student question: {question}
"""


class TemplateError(ValueError):
    """The prompt template does not satisfy the placeholder contract."""


@dataclass
class SafetyRewriteRule:
    """Literal case-insensitive phrase replacement applied before retrieval."""

    pattern: str
    replacement: str

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("rewrite pattern must be non-empty")
        if self.pattern.lower() in self.replacement.lower():
            raise ValueError("replacement must not contain its own pattern")


DEFAULT_REWRITE_RULES = [
    SafetyRewriteRule("install Nuke", "set up the Nuke compositing software"),
]


@dataclass
class PromptTemplate:
    """Template text carrying the four placeholders, each exactly once:
    {context}, {history}, {question}, {current_datetime}."""

    template_text: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        for name in PLACEHOLDERS:
            count = self.template_text.count("{%s}" % name)
            if count != 1:
                raise TemplateError(
                    f"template must contain {{{name}}} exactly once, found {count}"
                )


@dataclass
class Citation:
    source_path: str
    unit_number: int
    chunk_id: str


@dataclass
class ConversationTurn:
    turn_id: int
    query: str
    reply: str
    citations: list[Citation] = field(default_factory=list)
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    prompt_tokens: int = 0
    completion_tokens: int = 0
    degraded: bool = False
    violations: int = 0


def apply_rewrite_rules(
    query: str, rules: Sequence[SafetyRewriteRule]
) -> tuple[str, list[int]]:
    """Apply each rule once, in list order, replacing all case-insensitive
    occurrences. Returns the sanitized text and the indices of rules that
    fired; the caller keeps the original query for logging."""
    sanitized = query
    applied: list[int] = []
    for i, rule in enumerate(rules):
        pattern = re.compile(re.escape(rule.pattern), re.IGNORECASE)
        sanitized, n = pattern.subn(rule.replacement, sanitized)
        if n:
            applied.append(i)
    return sanitized, applied


def window_history(
    turns: Sequence[ConversationTurn], limit: int = 10
) -> list[ConversationTurn]:
    """Last min(limit, len(turns)) turns, order preserved."""
    if limit <= 0:
        return []
    return list(turns[-limit:])


def render_iso_datetime(now: datetime) -> str:
    if now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)
    return now.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _render_context(results: Sequence[RetrievalResult]) -> str:
    if not results:
        return "(none)"
    blocks = []
    for r in results:
        c = r.chunk
        blocks.append(
            f"SOURCE: {c.source_path} | unit {c.unit_number} | id {c.chunk_id}\n{c.text}"
        )
    return "\n\n".join(blocks)


def _render_history(history: Sequence[ConversationTurn]) -> str:
    if not history:
        return "(none)"
    lines = []
    for turn in history:
        lines.append(f"user: {turn.query}")
        lines.append(f"assistant: {turn.reply}")
    return "\n".join(lines)


_PLACEHOLDER_RE = re.compile(r"\{(context|history|question|current_datetime)\}")


def assemble_prompt(
    template: PromptTemplate,
    results: Sequence[RetrievalResult],
    history: Sequence[ConversationTurn],
    question: str,
    now: datetime,
    config: gw.BackendConfig,
) -> gw.ChatRequest:
    """Populate the template into the system message; the sanitized question
    is the final user message. Substitution is single-pass, so placeholder
    look-alikes inside retrieved text are never re-expanded."""
    values = {
        "context": _render_context(results),
        "history": _render_history(history),
        "question": question,
        "current_datetime": render_iso_datetime(now),
    }
    system = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.template_text)
    return gw.ChatRequest(
        messages=[("system", system), ("user", question)],
        model_id=config.model_id,
        temperature=config.temperature,
        max_output_tokens=config.max_output_tokens,
    )


_CITATION_RE = re.compile(r"\[source:\s*([^\[\]|]+?)\s*\|\s*unit\s+(\d+)\s*\]")


def validate_citations(
    reply: str, results: Sequence[RetrievalResult]
) -> tuple[str, list[Citation], int]:
    """Keep citations that name a retrieved chunk; strip the rest.

    Returns (clean reply, citations in order of appearance, violation count).
    Malformed citation syntax is left verbatim: only well-formed citations
    naming sources outside the retrieved set count as violations.
    """
    retrieved: dict[tuple[str, int], str] = {}
    for r in results:
        key = (r.chunk.source_path, r.chunk.unit_number)
        retrieved.setdefault(key, r.chunk.chunk_id)

    citations: list[Citation] = []
    violations = 0

    def _check(match: re.Match) -> str:
        nonlocal violations
        key = (match.group(1), int(match.group(2)))
        chunk_id = retrieved.get(key)
        if chunk_id is None:
            violations += 1
            return ""
        citations.append(Citation(key[0], key[1], chunk_id))
        return match.group(0)

    clean = _CITATION_RE.sub(_check, reply)
    return clean, citations, violations


LogSink = Callable[[ConversationTurn], None]


def handle_turn(
    session,
    query: str,
    snapshot: IndexSnapshot,
    template: PromptTemplate,
    rules: Sequence[SafetyRewriteRule],
    backend,
    now: datetime | None = None,
    k: int = 10,
    history_limit: int = 10,
    reranker=None,
    on_log: LogSink | None = None,
) -> ConversationTurn:
    """Run one full exchange and append it to the session.

    The history window budget counts the current exchange, so the assembled
    prompt never holds more than `history_limit` exchanges in total. A
    content-filter rejection records the turn with a standard apology rather
    than failing it; degraded retrieval proceeds keyword-only and flags the
    turn.
    """
    now = now or datetime.now(timezone.utc)
    sanitized, _applied = apply_rewrite_rules(query, rules)
    results, degraded = retrieve(snapshot, sanitized, backend, k=k, reranker=reranker)
    history = window_history(session.turns, history_limit - 1)
    request = assemble_prompt(template, results, history, sanitized, now, backend.config)
    try:
        response = gw.chat(request, backend)
        reply, citations, violations = validate_citations(response.content, results)
        prompt_tokens, completion_tokens = response.prompt_tokens, response.completion_tokens
    except gw.ContentFilteredError as exc:
        logger.warning("chat backend filtered the request: %s", exc.reason)
        reply, citations, violations = APOLOGY_REPLY, [], 0
        prompt_tokens = completion_tokens = 0
    turn = ConversationTurn(
        turn_id=len(session.turns) + 1,
        query=query,
        reply=reply,
        citations=citations,
        timestamp=now,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        degraded=degraded,
        violations=violations,
    )
    session.turns.append(turn)
    if on_log is not None:
        on_log(turn)
    return turn


# --- Config file loading ----------------------------------------------------


def load_template(path: str | Path) -> PromptTemplate:
    return PromptTemplate(Path(path).read_text(encoding="utf-8"))


def load_rewrite_rules(path: str | Path) -> list[SafetyRewriteRule]:
    """Rules file: JSON array of {"pattern": ..., "replacement": ...},
    applied in array order."""
    import json

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [SafetyRewriteRule(item["pattern"], item["replacement"]) for item in data]
