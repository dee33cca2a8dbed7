"""Provider-agnostic chat-completion client.

Generation discipline is fixed at the request level: temperature 0 and a
256-token response cap by default, zero-shot messages identical across
providers. Transient transport failures retry with exponential backoff
(1s base, factor 2, at most 5 attempts). A scripted provider keyed by
request hash makes whole pipeline runs reproducible offline.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

__all__ = [
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "LLMError",
    "AuthError",
    "TransientLLMError",
    "RetryExhaustedError",
    "MalformedReplyError",
    "LLMProvider",
    "request_key",
    "complete",
    "ScriptedProvider",
    "HttpChatProvider",
    "RunLog",
]

VALID_ROLES = ("system", "user", "assistant")


class LLMError(RuntimeError):
    pass


class AuthError(LLMError):
    """Missing or rejected credential; never retried."""


class TransientLLMError(LLMError):
    """Transport-level failure or rate limit; retried with backoff."""


class RetryExhaustedError(LLMError):
    """All retry attempts failed."""


class MalformedReplyError(LLMError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        for msg in self.messages:
            if msg.role not in VALID_ROLES:
                raise ValueError(f"invalid role {msg.role!r}")
        non_system = [m for m in self.messages if m.role != "system"]
        if non_system and non_system[0].role != "user":
            raise ValueError("first non-system message must have role 'user'")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    model: str
    latency_s: float
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    attempts: int = 1


def request_key(req: ChatRequest) -> str:
    """Stable content hash of a request; the scripted provider's lookup key."""
    payload = {
        "model": req.model,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class LLMProvider(Protocol):
    def generate(self, req: ChatRequest) -> tuple[str, dict | None]:
        """Return (response text, optional token-usage dict)."""
        ...


class RunLog:
    """Append-only ndjson log of every provider call."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)


def complete(
    req: ChatRequest,
    provider: LLMProvider,
    *,
    log: RunLog | None = None,
    max_attempts: int = 5,
    base_delay: float = 1.0,
    backoff_factor: float = 2.0,
    sleeper=None,
) -> ChatResponse:
    """Run one request through a provider with the standard retry policy."""
    sleep = sleeper if sleeper is not None else time.sleep
    start = time.monotonic()
    key = request_key(req)
    attempt = 0
    delay = base_delay
    while True:
        attempt += 1
        try:
            text, usage = provider.generate(req)
        except TransientLLMError as exc:
            if attempt >= max_attempts:
                _log(log, key, req.model, attempt, start, "retry_exhausted")
                raise RetryExhaustedError(f"{max_attempts} attempts failed: {exc}") from exc
            sleep(delay)
            delay *= backoff_factor
            continue
        except LLMError:
            _log(log, key, req.model, attempt, start, "error")
            raise
        latency = time.monotonic() - start
        _log(log, key, req.model, attempt, start, "ok")
        usage = usage or {}
        return ChatResponse(
            text=text,
            model=req.model,
            latency_s=latency,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
            attempts=attempt,
        )


def _log(log: RunLog | None, key: str, model: str, attempts: int, start: float, outcome: str) -> None:
    if log is None:
        return
    log.append(
        {
            "ts": time.time(),
            "request_hash": key,
            "model": model,
            "attempts": attempts,
            "latency_s": time.monotonic() - start,
            "outcome": outcome,
        }
    )


@dataclass
class ScriptedProvider:
    """Offline provider: a pure lookup from request hash to response text.

    Unknown keys return `default` unless strict, which raises instead.
    """

    fixtures: dict[str, str] = field(default_factory=dict)
    default: str = "UNKNOWN"
    strict: bool = False

    def generate(self, req: ChatRequest) -> tuple[str, dict | None]:
        key = request_key(req)
        if key in self.fixtures:
            return self.fixtures[key], None
        if self.strict:
            raise LLMError(f"scripted provider has no fixture for request {key[:12]}")
        return self.default, None


class HttpChatProvider:
    """Chat-completions HTTP client (the de-facto JSON wire shape).

    The credential is read from an environment variable, never from flags
    or files; a missing credential fails before any network call.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "RAGVV_API_KEY",
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def generate(self, req: ChatRequest) -> tuple[str, dict | None]:
        token = os.environ.get(self.api_key_env)
        if not token:
            raise AuthError(f"credential env var {self.api_key_env} is not set")
        body = {
            "model": req.model,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        try:
            resp = requests.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {token}"},
                timeout=self.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientLLMError(f"transport failure: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credential: {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientLLMError(f"provider answered {resp.status_code}")
        if resp.status_code >= 400:
            raise LLMError(f"provider answered {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedReplyError(f"unexpected reply shape: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedReplyError("reply content is not a string")
        return text, data.get("usage")
