"""Client for OpenAI-compatible chat-completion and embedding endpoints.

The network layer is a *transport*: a callable ``(path, payload) -> dict``.
:class:`HttpTransport` talks to a real server; tests pass plain functions.
Transports raise :class:`TransientError` for failures worth retrying.
"""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import httpx

from .prompts import entity_summary_prompt, relation_summary_prompt

logger = logging.getLogger(__name__)

Transport = Callable[[str, dict], dict]


class ServiceError(RuntimeError):
    """Request failed for good (non-transient error or retries exhausted)."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.message = message
        self.attempts = attempts

    def __str__(self) -> str:
        return f"{self.message} after {self.attempts} attempt(s)"


class TransientError(RuntimeError):
    """Rate limit, timeout or server-side failure; the request may be retried."""


class ProtocolError(ServiceError):
    """Service answered with a malformed or inconsistent payload."""


@dataclass
class ServiceConfig:
    base_url: str = "http://localhost:8000/v1"
    api_key_env: str = "OPENAI_API_KEY"
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-3-small"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    batch_size: int = 64
    backoff_base: float = 1.0
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ServiceConfig:
        return cls(**d)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user"):
            raise ValueError(f"unsupported role {self.role!r}")
        if self.role == "user" and not self.content:
            raise ValueError("user messages need content")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


class HttpTransport:
    """POSTs JSON to ``base_url + path`` with bearer auth read from the environment per request."""

    def __init__(self, config: ServiceConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)

    def __call__(self, path: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.config.base_url.rstrip("/") + path
        try:
            resp = self._client.post(url, json=payload, headers=headers, timeout=self.config.timeout)
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout calling {url}") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"connection error calling {url}: {type(exc).__name__}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code} from {url}")
        if resp.status_code >= 400:
            raise ServiceError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {url}") from exc


class ServiceClient:
    """Chat and embedding calls with retries, exponential backoff and an in-flight bound."""

    def __init__(
        self,
        config: ServiceConfig | None = None,
        transport: Transport | None = None,
        rng: random.Random | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config or ServiceConfig()
        self.transport = transport or HttpTransport(self.config)
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)

    def backoff_delay(self, attempt: int) -> float:
        """Delay before retry number ``attempt`` (0-based): base * 2**attempt plus up to one base of jitter."""
        base = self.config.backoff_base
        with self._rng_lock:
            jitter = self._rng.uniform(0, base)
        return base * (2**attempt) + jitter

    def request(self, path: str, payload: dict) -> dict:
        attempts = 0
        while True:
            attempts += 1
            try:
                with self._slots:
                    return self.transport(path, payload)
            except TransientError as exc:
                if attempts > self.config.max_retries:
                    raise ServiceError(f"{path}: {exc}", attempts) from exc
                delay = self.backoff_delay(attempts - 1)
                logger.info("transient failure on %s (%s); retry %d in %.2fs", path, exc, attempts, delay)
                self._sleep(delay)
            except ServiceError as exc:
                exc.attempts = attempts
                raise

    def chat_complete(self, messages: Sequence[ChatMessage]) -> str:
        payload = {
            "model": self.config.chat_model,
            "messages": [m.to_dict() for m in messages],
            "temperature": self.config.temperature,
        }
        reply = self.request("/chat/completions", payload)
        try:
            return reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("chat reply lacks choices[0].message.content") from exc

    def _embed_batch(self, batch: Sequence[str]) -> list[list[float]]:
        reply = self.request("/embeddings", {"model": self.config.embed_model, "input": list(batch)})
        try:
            data = sorted(reply["data"], key=lambda d: d.get("index", 0))
            vectors = [list(map(float, d["embedding"])) for d in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError("embedding reply lacks data[].embedding") from exc
        if len(vectors) != len(batch):
            raise ProtocolError(f"asked for {len(batch)} embeddings, got {len(vectors)}")
        return vectors

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed_texts needs at least one text")
        size = self.config.batch_size
        batches = [texts[i : i + size] for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=min(self.config.max_in_flight, len(batches))) as pool:
            results = list(pool.map(self._embed_batch, batches))
        vectors = [v for r in results for v in r]
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ProtocolError(f"embedding service returned mixed dimensions {sorted(dims)}")
        return vectors


class LLMSummarizer:
    """Summarizer backed by a chat model, using the entity or relation summary prompt."""

    def __init__(self, client: ServiceClient, kind: str = "entity"):
        if kind not in ("entity", "relation"):
            raise ValueError("kind must be 'entity' or 'relation'")
        self.client = client
        self.kind = kind

    def __call__(self, descriptions: Sequence[str], name: str) -> str:
        make = entity_summary_prompt if self.kind == "entity" else relation_summary_prompt
        reply = self.client.chat_complete([ChatMessage("user", make(name, list(descriptions)))])
        text = reply.strip()
        if not text:
            raise ProtocolError("summarizer returned an empty reply")
        return text
