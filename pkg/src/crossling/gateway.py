"""Uniform client over chat-completion model services.

Every model call in the system goes through :class:`LlmGateway`, which adds
content-addressed response caching, retry with exponential backoff and full
jitter, and bounded-concurrency batch execution.

The wire protocol is the de-facto chat-completions HTTP shape: JSON body
with ``model``, ``messages[{role,content}]``, ``temperature``,
``max_tokens``; the completion text is read from
``choices[0].message.content``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

from .errors import ConfigError, GatewayError, PermanentFailure, ProtocolError, TransientFailure

logger = logging.getLogger(__name__)

ROLES = ("teacher", "translator", "judge", "candidate", "prompt-translator")
MESSAGE_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    base_url: str
    auth_env: str | None = None
    role: str = "candidate"
    timeout: float = 60.0

    def validate(self) -> None:
        if not self.model_id:
            raise ConfigError("endpoint model_id must be non-empty")
        if not re.match(r"^[a-z][a-z0-9+.-]*://", self.base_url):
            raise ConfigError(f"endpoint base_url is not a well-formed URL: {self.base_url!r}")
        if self.role not in ROLES:
            raise ConfigError(f"unknown endpoint role {self.role!r}; expected one of {ROLES}")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    max_tokens: int = 2048
    stop: tuple[str, ...] | None = None

    def validate(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    endpoint: ModelEndpoint
    messages: tuple[Message, ...]
    params: GenerationParams = GenerationParams()

    def validate(self) -> None:
        self.endpoint.validate()
        self.params.validate()
        if not self.messages:
            raise ConfigError("chat request must carry at least one message")
        for msg in self.messages:
            if msg.role not in MESSAGE_ROLES:
                raise ConfigError(f"unknown message role {msg.role!r}")
        if self.messages[-1].role != "user":
            raise ConfigError("last message in a chat request must have role 'user'")


def user_request(endpoint: ModelEndpoint, prompt: str, params: GenerationParams) -> ChatRequest:
    return ChatRequest(endpoint=endpoint, messages=(Message("user", prompt),), params=params)


@dataclass(frozen=True)
class CacheKey:
    digest: str


def cache_key(req: ChatRequest) -> CacheKey:
    """Content hash over (model_id, canonicalized messages, params).

    Canonicalization: NFC normalization of message content, stable field
    ordering, no whitespace trimming. The digest is stable across process
    restarts and platforms.
    """
    payload = {
        "model": req.endpoint.model_id,
        "messages": [
            {"role": m.role, "content": unicodedata.normalize("NFC", m.content)}
            for m in req.messages
        ],
        "params": {
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "stop": list(req.params.stop) if req.params.stop else None,
        },
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return CacheKey(hashlib.sha256(blob.encode("utf-8")).hexdigest())


def _safe_component(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name) or "_"


class CacheStore:
    """Content-addressed on-disk cache: ``<root>/<model_id>/<digest>.json``.

    Writes are atomic (temp file + rename); concurrent writers of the same
    digest produce identical content, so last-writer-wins is harmless.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, namespace: str, digest: str) -> Path:
        return self.root / _safe_component(namespace) / f"{digest}.json"

    def get(self, namespace: str, digest: str) -> dict[str, Any] | None:
        path = self._path(namespace, digest)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            logger.warning("discarding unreadable cache entry %s", path)
            return None

    def put(self, namespace: str, digest: str, record: dict[str, Any]) -> None:
        path = self._path(namespace, digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{digest}.{threading.get_ident()}.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(record, fh, ensure_ascii=False, sort_keys=True)
        tmp.replace(path)


class TransportError(Exception):
    """Raised by transports; the gateway decides whether it is retryable.

    ``status`` is the HTTP status code, or None for timeouts and
    connection-level failures.
    """

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status

    @property
    def retryable(self) -> bool:
        return self.status is None or self.status == 429 or self.status >= 500


class ChatTransport(Protocol):
    def send(self, req: ChatRequest) -> str: ...


class HttpChatTransport:
    """POSTs chat-completion requests over HTTP with bearer-token auth."""

    def __init__(self, session: Any | None = None):
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def send(self, req: ChatRequest) -> str:
        import os

        import requests

        headers = {"Content-Type": "application/json"}
        if req.endpoint.auth_env:
            token = os.environ.get(req.endpoint.auth_env)
            if not token:
                raise PermanentFailure(
                    f"auth env var {req.endpoint.auth_env!r} for {req.endpoint.model_id} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        body: dict[str, Any] = {
            "model": req.endpoint.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
        }
        if req.params.stop:
            body["stop"] = list(req.params.stop)
        try:
            resp = self._session.post(
                req.endpoint.base_url, json=body, headers=headers, timeout=req.endpoint.timeout
            )
        except requests.Timeout as exc:
            raise TransportError(f"timeout calling {req.endpoint.base_url}: {exc}") from exc
        except requests.RequestException as exc:
            raise TransportError(f"connection failure calling {req.endpoint.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"{req.endpoint.base_url} returned HTTP {resp.status_code}", status=resp.status_code
            )
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise ProtocolError(
                f"malformed completion body from {req.endpoint.base_url}: {exc}"
            ) from exc
        if not isinstance(text, str):
            raise ProtocolError(f"completion content is not a string: {type(text).__name__}")
        return text


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0

    def validate(self) -> None:
        if self.attempts < 1:
            raise ConfigError(f"retry attempts must be >= 1, got {self.attempts}")


@dataclass
class GatewayStats:
    """Aggregate counters; updated under a lock, safe to read at any time."""

    cache_hits: int = 0
    cache_misses: int = 0
    backend_calls: int = 0
    retries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, **deltas: int) -> None:
        with self._lock:
            for name, delta in deltas.items():
                setattr(self, name, getattr(self, name) + delta)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "backend_calls": self.backend_calls,
                "retries": self.retries,
            }


def run_with_retries(
    fn: Callable[[], Any],
    policy: RetryPolicy,
    sleep: Callable[[float], None],
    rng: random.Random,
    on_call: Callable[[], None] | None = None,
) -> tuple[Any, int]:
    """Run fn under the retry policy; returns (result, attempts used).

    Retryable TransportErrors are retried with full-jitter exponential
    backoff; everything else propagates immediately.
    """
    policy.validate()
    last: TransportError | None = None
    for attempt in range(1, policy.attempts + 1):
        if on_call is not None:
            on_call()
        try:
            return fn(), attempt
        except TransportError as exc:
            if not exc.retryable:
                raise PermanentFailure(str(exc), status=exc.status) from exc
            last = exc
            if attempt < policy.attempts:
                delay = rng.uniform(0.0, policy.base_delay * policy.factor ** (attempt - 1))
                sleep(delay)
    raise TransientFailure(str(last), attempts=policy.attempts)


class LlmGateway:
    """Cached, retried, batch-capable access to chat-completion backends.

    ``complete`` is safe to call from multiple threads; the disk cache
    serializes writes per digest via atomic renames.
    """

    def __init__(
        self,
        cache: CacheStore,
        transport: ChatTransport,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        self.cache = cache
        self.transport = transport
        self.retry = retry
        self._sleep = sleep
        self._jitter_rng = jitter_rng or random.Random()
        self.stats = GatewayStats()

    def complete(self, req: ChatRequest) -> str:
        """Return the completion text for req, consulting the cache first."""
        req.validate()
        digest = cache_key(req).digest
        namespace = req.endpoint.model_id
        cached = self.cache.get(namespace, digest)
        if cached is not None:
            self.stats.bump(cache_hits=1)
            return cached["text"]
        self.stats.bump(cache_misses=1)

        text, attempts = run_with_retries(
            lambda: self.transport.send(req),
            self.retry,
            self._sleep,
            self._jitter_rng,
            on_call=lambda: self.stats.bump(backend_calls=1),
        )
        if attempts > 1:
            self.stats.bump(retries=attempts - 1)
        self.cache.put(
            namespace,
            digest,
            {
                "digest": digest,
                "model_id": req.endpoint.model_id,
                "messages": [{"role": m.role, "content": m.content} for m in req.messages],
                "params": {
                    "temperature": req.params.temperature,
                    "max_tokens": req.params.max_tokens,
                    "stop": list(req.params.stop) if req.params.stop else None,
                },
                "attempts": attempts,
                "text": text,
            },
        )
        return text

    def complete_batch(
        self, reqs: Sequence[ChatRequest], max_in_flight: int
    ) -> list[str | GatewayError]:
        """Run requests with at most max_in_flight outstanding at once.

        Results come back in input order; a failed item is returned as the
        GatewayError it raised and never aborts the rest of the batch.
        """
        if max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {max_in_flight}")
        if not reqs:
            return []
        results: list[str | GatewayError] = [None] * len(reqs)  # type: ignore[list-item]

        def worker(index: int, req: ChatRequest) -> None:
            try:
                results[index] = self.complete(req)
            except GatewayError as exc:
                results[index] = exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = [pool.submit(worker, i, req) for i, req in enumerate(reqs)]
            for future in futures:
                future.result()
        return results
