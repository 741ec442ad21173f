"""Chat-completion and embedding providers.

Two chat backends share one contract: a deterministic scripted backend for
offline runs and tests, and a generic HTTP backend for real endpoints
(messages array in, choices out — no provider-specific function calling).
Embeddings default to a hashed bag-of-words scheme so semantic ranking is
reproducible without network access.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol

import httpx

from agentflow.core import Message, Role

EMBEDDING_DIM = 256

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


class BackendError(Exception):
    pass


class BackendUnavailableError(BackendError):
    """Transport failure after retries."""


class ScriptExhaustedError(BackendError):
    """Scripted backend asked for more responses than the fixture holds."""


class ScriptMismatchError(BackendError):
    """The rendered prompt did not contain the fixture's expected substring."""


class DimensionMismatchError(BackendError):
    pass


@dataclass
class ChatRequest:
    messages: list[Message]
    temperature: float = 0.0
    max_tokens: int = 1024
    stop_sequences: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.messages or self.messages[0].role is not Role.SYSTEM:
            raise ValueError("first message must have the system role")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        for prev, cur in zip(self.messages, self.messages[1:]):
            if prev.role is Role.ASSISTANT and cur.role is Role.ASSISTANT:
                raise ValueError("two consecutive assistant messages")

    def rendered(self) -> str:
        """Flatten the conversation for fixture matching and hashing."""
        return "\n".join(f"[{m.role.value}] {m.content}" for m in self.messages)


@dataclass
class EmbeddingVector:
    values: list[float]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def __len__(self) -> int:
        return len(self.values)


def _token_bucket(token: str, dim: int) -> int:
    # blake2b keeps the 64-bit token hash stable across processes
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def embed(text: str, dim: int = EMBEDDING_DIM) -> EmbeddingVector:
    """Hashed bag-of-words embedding, L2-normalized.

    Lowercase, split on non-alphanumerics, hash each token into ``dim``
    buckets, count occurrences, normalize. Empty text embeds to the zero
    vector.
    """
    counts = [0.0] * dim
    for token in _TOKEN_SPLIT.split(text.lower()):
        if token:
            counts[_token_bucket(token, dim)] += 1.0
    total = math.sqrt(sum(c * c for c in counts))
    if total == 0.0:
        return EmbeddingVector(values=counts)
    return EmbeddingVector(values=[c / total for c in counts])


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b) / (|a||b|); 0.0 when either vector has zero norm."""
    if len(a) != len(b):
        raise DimensionMismatchError(f"dimensions differ: {len(a)} vs {len(b)}")
    norm_a, norm_b = a.norm, b.norm
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return dot / (norm_a * norm_b)


class Embedder(Protocol):
    def __call__(self, text: str) -> EmbeddingVector: ...


# Called with (rendered_prompt, response_text) after each completed chat call.
ChatObserver = Callable[[str, str], None]


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


@dataclass
class ScriptEntry:
    expect: Optional[str]
    response: str


class ScriptedBackend:
    """Deterministic chat backend replaying a fixture strictly in order.

    Each entry may pin an ``expect`` substring that must occur in the
    rendered prompt; a miss aborts the run with a diff-style error so
    routing regressions surface immediately. Calls are serialized
    internally, and the cursor can be exported/restored for snapshots.
    """

    def __init__(
        self,
        entries: list[ScriptEntry],
        observer: Optional[ChatObserver] = None,
    ):
        self.entries = list(entries)
        self.cursor = 0
        self.transcript: list[tuple[str, str]] = []
        self.observer = observer
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str, observer: Optional[ChatObserver] = None) -> "ScriptedBackend":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                entries.append(ScriptEntry(expect=data.get("expect"), response=data["response"]))
        return cls(entries, observer=observer)

    def chat(self, request: ChatRequest) -> str:
        prompt = request.rendered()
        with self._lock:
            if self.cursor >= len(self.entries):
                raise ScriptExhaustedError(
                    f"fixture exhausted after {len(self.entries)} calls; "
                    f"next prompt was:\n{prompt}"
                )
            entry = self.entries[self.cursor]
            if entry.expect is not None and entry.expect not in prompt:
                raise ScriptMismatchError(
                    f"fixture entry {self.cursor} expected substring "
                    f"{entry.expect!r} missing from prompt:\n{prompt}"
                )
            self.cursor += 1
            self.transcript.append((prompt, entry.response))
        if self.observer:
            self.observer(prompt, entry.response)
        return entry.response

    # snapshot/resume support: replaying a resumed workflow must not
    # re-consume fixture entries for already-completed tasks
    def state(self) -> dict[str, Any]:
        with self._lock:
            return {"cursor": self.cursor}

    def restore(self, state: dict[str, Any]) -> None:
        with self._lock:
            self.cursor = int(state.get("cursor", 0))


@dataclass
class HttpBackendConfig:
    base_url: str
    model: str
    auth_env_var: Optional[str] = None
    timeout_seconds: float = 60.0
    max_retries: int = 1


class HttpBackend:
    """Generic chat-completion endpoint: messages array in, choices out."""

    def __init__(self, config: HttpBackendConfig, observer: Optional[ChatObserver] = None):
        self.config = config
        self.observer = observer
        self._client = httpx.Client(base_url=config.base_url, timeout=config.timeout_seconds)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env_var:
            token = os.environ.get(self.config.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def chat(self, request: ChatRequest) -> str:
        body = {
            "model": self.config.model,
            "messages": [
                {"role": m.role.value, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            body["stop"] = request.stop_sequences
        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._client.post(
                    "/chat/completions", json=body, headers=self._headers()
                )
                response.raise_for_status()
                data = response.json()
                text = data["choices"][0]["message"]["content"]
                if self.observer:
                    self.observer(request.rendered(), text)
                return text
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt < self.config.max_retries:
                    time.sleep(0.2 * (2**attempt))
        raise BackendUnavailableError(f"chat endpoint unavailable: {last_error}")


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
