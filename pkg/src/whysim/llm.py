"""Provider-agnostic chat completion client with retries plus offline stubs.

The HTTP provider speaks the common chat-completions wire format (message
list in, choice list out) with bearer-token auth. Credentials are referenced
by environment variable name and never logged or stored.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

logger = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int | str, body: str = ""):
        super().__init__(f"provider error {status}: {body[:200]}")
        self.status = status
        self.body = body[:500]


class Timeout(GatewayError):
    pass


class BudgetExhausted(GatewayError):
    pass


class StorageUnavailable(GatewayError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.text:
            raise ValueError(f"{self.role} message text must be non-empty")


@dataclass
class ProviderConfig:
    provider: str  # "http" | "stub" | "echo"
    model: str = ""
    endpoint: str = ""
    credential_env: str = ""  # name of the env var holding the API key
    max_output_tokens: int = 512
    temperature: float | None = None  # None = provider default
    timeout_s: float = 60.0
    retry_budget: int = 2
    script: list[str] | None = None  # stub provider only
    script_path: str = ""

    def __post_init__(self) -> None:
        if self.retry_budget < 0:
            raise ValueError("retry budget must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class Completion:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: float


class Provider:
    def complete(self, messages: list[ChatMessage], config: ProviderConfig) -> Completion:
        raise NotImplementedError


class ScriptedProvider(Provider):
    """Replays a fixed list of responses in order; deterministic for tests."""

    def __init__(self, script: list[str]):
        self.script = list(script)
        self._index = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        lines = Path(path).read_text().split("\n---\n")
        return cls([chunk.strip() for chunk in lines if chunk.strip()])

    def complete(self, messages, config) -> Completion:
        with self._lock:
            if self._index >= len(self.script):
                raise ProviderError("script", "script exhausted")
            text = self.script[self._index]
            self._index += 1
        n_in = sum(len(m.text.split()) for m in messages)
        return Completion(text=text, input_tokens=n_in, output_tokens=len(text.split()),
                          latency_ms=0.0)


class EchoProvider(Provider):
    """Returns the last user message; handy for plumbing tests."""

    def complete(self, messages, config) -> Completion:
        users = [m for m in messages if m.role == "user"]
        if not users:
            raise ProviderError("echo", "no user message to echo")
        text = users[-1].text
        return Completion(text=text, input_tokens=0, output_tokens=len(text.split()),
                          latency_ms=0.0)


class CallableProvider(Provider):
    """Wraps a function(messages) -> str; for prompt-aware test judges."""

    def __init__(self, fn):
        self.fn = fn

    def complete(self, messages, config) -> Completion:
        text = self.fn(messages)
        return Completion(text=text, input_tokens=0, output_tokens=len(str(text).split()),
                          latency_ms=0.0)


class HttpProvider(Provider):
    """Chat-completions-style HTTP adapter with exponential backoff."""

    RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(self, client: httpx.Client | None = None):
        self._client = client

    def _key(self, config: ProviderConfig) -> str:
        if not config.credential_env:
            return ""
        key = os.environ.get(config.credential_env, "")
        if not key:
            raise ProviderError("auth", f"environment variable {config.credential_env} not set")
        return key

    def complete(self, messages, config) -> Completion:
        payload = {
            "model": config.model,
            "messages": [{"role": m.role, "content": m.text} for m in messages],
            "max_tokens": config.max_output_tokens,
        }
        if config.temperature is not None:
            payload["temperature"] = config.temperature
        headers = {"Content-Type": "application/json"}
        key = self._key(config)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        client = self._client or httpx.Client(timeout=config.timeout_s)
        owns_client = self._client is None
        try:
            last_error: Exception | None = None
            for attempt in range(config.retry_budget + 1):
                if attempt:
                    time.sleep(min(2.0 ** attempt * 0.5, 8.0))
                start = time.monotonic()
                try:
                    response = client.post(config.endpoint, json=payload, headers=headers)
                except httpx.TimeoutException as exc:
                    last_error = Timeout(str(exc))
                    continue
                except httpx.HTTPError as exc:
                    last_error = ProviderError("transport", str(exc))
                    continue
                latency = (time.monotonic() - start) * 1000.0
                if response.status_code in self.RETRYABLE:
                    last_error = ProviderError(response.status_code, response.text)
                    continue
                if response.status_code != 200:
                    raise ProviderError(response.status_code, response.text)
                data = response.json()
                usage = data.get("usage", {})
                return Completion(
                    text=data["choices"][0]["message"]["content"],
                    input_tokens=int(usage.get("prompt_tokens", 0)),
                    output_tokens=int(usage.get("completion_tokens", 0)),
                    latency_ms=latency,
                )
            raise BudgetExhausted(f"retries exhausted: {last_error}")
        finally:
            if owns_client:
                client.close()


def make_provider(config: ProviderConfig) -> Provider:
    if config.provider == "stub":
        if config.script is not None:
            return ScriptedProvider(config.script)
        if config.script_path:
            return ScriptedProvider.from_file(config.script_path)
        raise GatewayError("stub provider needs a script or script_path")
    if config.provider == "echo":
        return EchoProvider()
    if config.provider == "http":
        return HttpProvider()
    raise GatewayError(f"unknown provider {config.provider!r}")


class Gateway:
    """Session-scoped wrapper around a provider: logging, request guards."""

    def __init__(self, provider: Provider, config: ProviderConfig, session_id: str = ""):
        self.provider = provider
        self.config = config
        self.session_id = session_id
        self.calls = 0

    def complete(self, messages: list[ChatMessage]) -> Completion:
        if not messages:
            raise GatewayError("empty message list")
        if messages[0].role != "system":
            raise GatewayError("first message must be the system prompt")
        self.calls += 1
        logger.info("session=%s call=%d messages=%d", self.session_id, self.calls, len(messages))
        completion = self.provider.complete(messages, self.config)
        logger.info(
            "session=%s call=%d tokens=%d/%d latency=%.0fms",
            self.session_id, self.calls,
            completion.input_tokens, completion.output_tokens, completion.latency_ms,
        )
        return completion


@dataclass
class TranscriptStore:
    """Append-only JSON transcript storage, one file per session."""

    root: Path
    _locks: dict[str, threading.Lock] = field(default_factory=dict)
    _guard: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def _path(self, session_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in session_id)
        return self.root / f"{safe}.json"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def record(self, session_id: str, entries: list[dict]) -> Path:
        path = self._path(session_id)
        with self._lock(session_id):
            existing = []
            if path.exists():
                existing = json.loads(path.read_text())
            existing.extend(entries)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(existing, indent=2, sort_keys=True))
            tmp.replace(path)
        return path

    def load(self, session_id: str) -> list[dict]:
        path = self._path(session_id)
        if not path.exists():
            raise StorageUnavailable(f"no transcript for {session_id}")
        return json.loads(path.read_text())

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))
