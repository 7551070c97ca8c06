"""Language-model access with caching, retries, and a call budget.

The client wraps a backend (remote HTTP, deterministic stub, or disabled)
behind a content-addressed response cache. Identical requests against the
same backend identity always map to the same cache key, so warm-cache runs
are fully offline and byte-reproducible. Failures surface as
BackendUnavailable after bounded retries; callers decide how to degrade.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from .errors import BackendUnavailable, BudgetExceeded, InvalidRequest

ENV_ENDPOINT = "KG2FT_LLM_ENDPOINT"
ENV_API_KEY = "KG2FT_LLM_API_KEY"
ENV_MODEL = "KG2FT_LLM_MODEL"

MAX_ATTEMPTS = 5
BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class PromptRequest:
    """One completion request. temperature defaults to 0 for determinism."""

    user_text: str
    system_text: str = ""
    max_output_tokens: int = 256
    temperature: float = 0.0

    def validate(self) -> None:
        if not self.user_text.strip():
            raise InvalidRequest("user_text must be non-empty")
        if self.max_output_tokens < 1:
            raise InvalidRequest(f"max_output_tokens must be >= 1, got {self.max_output_tokens}")
        if self.temperature < 0:
            raise InvalidRequest(f"temperature must be >= 0, got {self.temperature}")


def _echo_transform(request: PromptRequest) -> str:
    """Fallback stub behavior: the last non-empty line of the user text.

    Prompts built by this package put the content to transform last, so
    the echo degrades to an identity rewrite rather than nonsense.
    """
    for line in reversed(request.user_text.splitlines()):
        if line.strip():
            return line.strip()
    return request.user_text.strip()


class StubBackend:
    """Deterministic offline backend.

    Fixtures are (substring, response) pairs matched against the system
    text plus user text; the first registered match wins. With no match,
    the documented echo transform applies. Thread-safe counters record
    call volume and peak concurrency so tests can assert on both.
    """

    def __init__(self, fixtures: Iterable[tuple[str, str]] = (), fail_first: int = 0, latency: float = 0.0):
        self.identifier = "stub"
        self._fixtures: list[tuple[str, str]] = list(fixtures)
        self._lock = threading.Lock()
        self._fail_remaining = fail_first
        self._latency = latency
        self.calls = 0
        self._active = 0
        self.peak_concurrency = 0

    def register_fixtures(self, fixtures: Mapping[str, str] | Iterable[tuple[str, str]]) -> None:
        items = fixtures.items() if isinstance(fixtures, Mapping) else fixtures
        self._fixtures.extend(items)

    def generate(self, request: PromptRequest) -> str:
        with self._lock:
            self.calls += 1
            self._active += 1
            self.peak_concurrency = max(self.peak_concurrency, self._active)
            should_fail = self._fail_remaining > 0
            if should_fail:
                self._fail_remaining -= 1
        try:
            if self._latency:
                time.sleep(self._latency)
            if should_fail:
                raise ConnectionError("stub backend transient failure")
            haystack = request.system_text + "\n" + request.user_text
            for needle, response in self._fixtures:
                if needle in haystack:
                    return response
            return _echo_transform(request)
        finally:
            with self._lock:
                self._active -= 1


class RemoteBackend:
    """HTTP chat-completion backend configured from arguments or env vars."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT, "")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        self.timeout = timeout
        if not self.endpoint:
            raise InvalidRequest(f"remote backend needs an endpoint ({ENV_ENDPOINT})")
        if not self.model:
            raise InvalidRequest(f"remote backend needs a model name ({ENV_MODEL})")
        self.identifier = f"remote:{self.model}"

    def generate(self, request: PromptRequest) -> str:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        response = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        response.raise_for_status()
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ValueError(f"unexpected response shape from {self.endpoint}: {exc}") from exc


class PermanentFailure(Exception):
    """A backend fault retries cannot fix; the client fails immediately."""


class DisabledBackend:
    """Backend that always fails; selects the no-LLM degradation path."""

    identifier = "off"

    def generate(self, request: PromptRequest) -> str:
        raise PermanentFailure("language-model backend is disabled")


class LlmClient:
    """Caching, retrying, budgeted front door to a backend.

    The budget counts logical backend requests (cache misses), not retry
    attempts. max_in_flight bounds concurrent backend calls when callers
    run in threads. sleep is injectable so tests can observe backoff
    without waiting.
    """

    def __init__(
        self,
        backend,
        cache_dir: str | Path | None = None,
        max_calls: int | None = None,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise InvalidRequest(f"max_in_flight must be >= 1, got {max_in_flight}")
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.max_calls = max_calls
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()
        self.backend_requests = 0
        self.cache_hits = 0

    def cache_key(self, request: PromptRequest) -> str:
        blob = json.dumps(
            {
                "backend": self.backend.identifier,
                "system": request.system_text,
                "user": request.user_text,
                "max_output_tokens": request.max_output_tokens,
                "temperature": request.temperature,
            },
            sort_keys=True,
            ensure_ascii=False,
        ).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _cache_read(self, key: str) -> str | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return payload["response"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError):
            return None  # unreadable entries are treated as misses

    def _cache_write(self, key: str, request: PromptRequest, response: str) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "key": key,
            "backend": self.backend.identifier,
            "request": {
                "system": request.system_text,
                "user": request.user_text,
                "max_output_tokens": request.max_output_tokens,
                "temperature": request.temperature,
            },
            "response": response,
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)

    def complete(self, request: PromptRequest) -> str:
        request.validate()
        key = self.cache_key(request)
        cached = self._cache_read(key)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return cached
        with self._lock:
            if self.max_calls is not None and self.backend_requests >= self.max_calls:
                raise BudgetExceeded(f"backend call budget of {self.max_calls} exhausted")
            self.backend_requests += 1
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self._sleep(BACKOFF_BASE * BACKOFF_FACTOR ** (attempt - 1))
            try:
                with self._semaphore:
                    response = self.backend.generate(request)
                self._cache_write(key, request, response)
                return response
            except PermanentFailure as exc:
                raise BackendUnavailable(
                    f"backend {self.backend.identifier!r} unavailable: {exc}"
                ) from exc
            except Exception as exc:  # noqa: BLE001 - any backend fault retries
                last_error = exc
        raise BackendUnavailable(
            f"backend {self.backend.identifier!r} failed after {MAX_ATTEMPTS} attempts: {last_error}"
        ) from last_error


def make_backend(kind: str, **kwargs):
    if kind == "stub":
        return StubBackend(**kwargs)
    if kind == "remote":
        return RemoteBackend(**kwargs)
    if kind == "off":
        return DisabledBackend()
    raise InvalidRequest(f"unknown backend kind {kind!r} (expected stub, remote, or off)")
