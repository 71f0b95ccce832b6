"""Chat-completion and embedding backends behind one small interface.

Backends speak the OpenAI-compatible wire protocol (``/chat/completions``
and ``/embeddings``) so the same gateway works against hosted APIs or any
local OpenAI-compatible server. Two deterministic offline mocks (echo and
scripted) make every downstream module testable without network access.

Error taxonomy:
    RetriableBackendError  -- network trouble, timeouts, 5xx; retried
    BackendConfigError     -- HTTP 4xx, bad base URL, missing key; not retried
    ContentFilteredError   -- the backend's safety filter refused the request
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Sequence

import requests

from .textutil import term_counts

ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for backend failures."""


class RetriableBackendError(GatewayError):
    """Transient failure (network, timeout, 5xx). Safe to retry."""


class BackendConfigError(GatewayError):
    """Permanent failure caused by configuration (4xx, bad URL, bad key)."""


class ContentFilteredError(GatewayError):
    """The backend's content-safety filter rejected the request."""

    def __init__(self, reason: str):
        super().__init__(f"content filtered: {reason}")
        self.reason = reason


@dataclass
class ChatRequest:
    """One chat-completion call: a system message followed by the dialogue.

    Invariants (checked at construction): messages non-empty, first message
    is the single system message, the rest alternate user/assistant starting
    with user, temperature in [0, 2], max_output_tokens positive.
    """

    messages: list[tuple[str, str]]
    model_id: str
    temperature: float = 0.2
    max_output_tokens: int = 1024

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for role, content in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            if not isinstance(content, str):
                raise ValueError("message content must be text")
        if self.messages[0][0] != "system":
            raise ValueError("first message must have role 'system'")
        expected = "user"
        for role, _ in self.messages[1:]:
            if role != expected:
                raise ValueError("roles must alternate user/assistant after the system message")
            expected = "assistant" if expected == "user" else "user"
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass
class PriceTable:
    """Per-1K-token prices for prompt and completion tokens."""

    price_in_per_1k: float
    price_out_per_1k: float

    def __post_init__(self):
        if self.price_in_per_1k < 0 or self.price_out_per_1k < 0:
            raise ValueError("prices must be non-negative")


@dataclass
class BackendConfig:
    """Gateway configuration. `backend` selects live or mock operation."""

    backend: str = "mock-echo"  # live | mock-echo | mock-scripted
    model_id: str = "gpt-4o-mini"
    embedding_model_id: str = "text-embedding-ada-002"
    embedding_dim: int = 32
    temperature: float = 0.2
    max_output_tokens: int = 1024
    price_in_per_1k: float = 0.0
    price_out_per_1k: float = 0.0
    base_url: str = "http://localhost:8080/v1"
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0
    scripted_replies: dict[str, str] = field(default_factory=dict)
    scripted_default: str = ""
    scripted_filtered: frozenset[str] = frozenset()

    def price_table(self) -> PriceTable:
        return PriceTable(self.price_in_per_1k, self.price_out_per_1k)


def request_to_wire(request: ChatRequest) -> dict:
    """Serialize a ChatRequest to the OpenAI-compatible JSON body.

    The body carries exactly: model, messages, temperature, max_tokens.
    """
    return {
        "model": request.model_id,
        "messages": [{"role": r, "content": c} for r, c in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }


def wire_to_request(body: dict) -> ChatRequest:
    """Parse a wire body back into a ChatRequest (inverse of request_to_wire)."""
    return ChatRequest(
        messages=[(m["role"], m["content"]) for m in body["messages"]],
        model_id=body["model"],
        temperature=body["temperature"],
        max_output_tokens=body["max_tokens"],
    )


def _word_count(messages: Sequence[tuple[str, str]]) -> int:
    return sum(len(content.split()) for _, content in messages)


def mock_embedding(text: str, dim: int) -> list[float]:
    """Deterministic embedding: hash term counts into `dim` buckets, unit norm.

    Pure function of (text, dim); identical texts always map to identical
    vectors, and every vector has Euclidean norm 1.
    """
    if dim < 1:
        raise ValueError("embedding dimension must be positive")
    buckets = [0.0] * dim
    counts = term_counts(text)
    if not counts:
        # Punctuation-only input yields no terms; pin it to one stable bucket.
        buckets[int.from_bytes(hashlib.sha256(b"").digest()[:8], "big") % dim] = 1.0
    else:
        for token, count in counts.items():
            idx = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big") % dim
            buckets[idx] += float(count)
    norm = math.sqrt(sum(v * v for v in buckets))
    return [v / norm for v in buckets]


class MockEchoBackend:
    """Replies with the last user message verbatim. Stateless and pure."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def chat(self, request: ChatRequest) -> ChatResponse:
        last_user = next((c for r, c in reversed(request.messages) if r == "user"), "")
        return ChatResponse(
            content=last_user,
            prompt_tokens=_word_count(request.messages),
            completion_tokens=len(last_user.split()),
        )

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [mock_embedding(t, self.config.embedding_dim) for t in texts]


class MockScriptedBackend:
    """Replies from a canned table keyed on the last user message.

    Unknown keys get `scripted_default`; keys in `scripted_filtered` raise
    ContentFilteredError, which lets tests drive the filtered error path.
    """

    def __init__(self, config: BackendConfig):
        self.config = config

    def chat(self, request: ChatRequest) -> ChatResponse:
        last_user = next((c for r, c in reversed(request.messages) if r == "user"), "")
        if last_user in self.config.scripted_filtered:
            raise ContentFilteredError("scripted filter match")
        reply = self.config.scripted_replies.get(last_user, self.config.scripted_default)
        return ChatResponse(
            content=reply,
            prompt_tokens=_word_count(request.messages),
            completion_tokens=len(reply.split()),
        )

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [mock_embedding(t, self.config.embedding_dim) for t in texts]


# transport(url, json_body, headers, timeout) -> (status_code, parsed_json)
Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


def _requests_transport(url: str, body: dict, headers: dict, timeout: float) -> tuple[int, dict]:
    try:
        resp = requests.post(url, json=body, headers=headers, timeout=timeout)
    except requests.Timeout as exc:
        raise RetriableBackendError(f"timeout calling {url}") from exc
    except requests.RequestException as exc:
        raise RetriableBackendError(f"network error calling {url}: {exc}") from exc
    try:
        payload = resp.json()
    except ValueError:
        payload = {}
    return resp.status_code, payload


class HttpBackend:
    """Live OpenAI-compatible HTTP backend.

    API key is read from the environment variable named in the config and
    sent as a bearer token. A custom `transport` may be injected for tests.
    """

    def __init__(self, config: BackendConfig, transport: Transport | None = None):
        self.config = config
        self.transport = transport or _requests_transport

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        status, payload = self.transport(url, body, self._headers(), self.config.timeout_s)
        if status >= 500:
            raise RetriableBackendError(f"backend returned {status}")
        if status >= 400:
            error = payload.get("error", {}) if isinstance(payload, dict) else {}
            code = error.get("code", "")
            if code == "content_filter":
                raise ContentFilteredError(error.get("message", "content filter"))
            raise BackendConfigError(f"backend returned {status}: {error.get('message', payload)}")
        return payload

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = self._post("/chat/completions", request_to_wire(request))
        try:
            choice = payload["choices"][0]
            if choice.get("finish_reason") == "content_filter":
                raise ContentFilteredError("completion stopped by content filter")
            usage = payload.get("usage", {})
            return ChatResponse(
                content=choice["message"]["content"] or "",
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendConfigError(f"malformed chat response: {exc}") from exc

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = {"model": self.config.embedding_model_id, "input": list(texts)}
        payload = self._post("/embeddings", body)
        try:
            vectors = [[float(v) for v in item["embedding"]] for item in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise BackendConfigError(f"malformed embeddings response: {exc}") from exc
        for vec in vectors:
            if any(not math.isfinite(v) for v in vec):
                raise BackendConfigError("embedding contains non-finite values")
        return vectors


def build_backend(config: BackendConfig, transport: Transport | None = None):
    if config.backend == "mock-echo":
        return MockEchoBackend(config)
    if config.backend == "mock-scripted":
        return MockScriptedBackend(config)
    if config.backend == "live":
        return HttpBackend(config, transport=transport)
    raise BackendConfigError(f"unknown backend kind {config.backend!r}")


MAX_RETRIES = 2
BACKOFF_BASE_S = 0.5


def _with_retries(call, sleep=time.sleep):
    for attempt in range(MAX_RETRIES + 1):
        try:
            return call()
        except RetriableBackendError:
            if attempt == MAX_RETRIES:
                raise
            sleep(BACKOFF_BASE_S * (2**attempt))


def chat(request: ChatRequest, backend, sleep=time.sleep) -> ChatResponse:
    """Send one chat request. Retries transient failures; never retries
    filter rejections or configuration errors."""
    request.validate()
    return _with_retries(lambda: backend.chat(request), sleep=sleep)


def embed(texts: Sequence[str], backend, sleep=time.sleep) -> list[list[float]]:
    """Embed a batch of texts, one vector per input, all of equal dimension."""
    if not texts:
        raise ValueError("texts must be non-empty")
    for t in texts:
        if not t.strip():
            raise ValueError("texts must be non-empty after whitespace trim")
    vectors = _with_retries(lambda: backend.embed(texts), sleep=sleep)
    if len(vectors) != len(texts):
        raise GatewayError("backend returned wrong number of vectors")
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise GatewayError("backend returned vectors of mixed dimension")
    return vectors


_CENT_MICRO = Decimal("0.000001")


def count_cost(usage: Sequence[tuple[int, int]], price_table: PriceTable) -> float:
    """Total cost of a usage list at per-1K-token prices.

    Each entry's contribution is rounded to 6 decimal places before summing,
    which keeps cost accounting exactly linear over concatenated usage lists.
    """
    p_in = Decimal(str(price_table.price_in_per_1k))
    p_out = Decimal(str(price_table.price_out_per_1k))
    total = Decimal(0)
    for prompt_tokens, completion_tokens in usage:
        if prompt_tokens < 0 or completion_tokens < 0:
            raise ValueError("token counts must be non-negative")
        entry = (Decimal(prompt_tokens) * p_in + Decimal(completion_tokens) * p_out) / Decimal(1000)
        total += entry.quantize(_CENT_MICRO)
    return float(total)
