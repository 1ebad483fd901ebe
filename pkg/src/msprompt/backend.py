"""Model backends, the response cache, and the retrying, concurrency-bounded client.

Wire format for :class:`HttpBackend` (POST, JSON)::

    {"model": "...", "temperature": 0.0, "max_tokens": 256,
     "messages": [{"role": "user", "content": [
         {"image": "<base64 PNG>", "mime": "image/png"}, ...,
         {"text": "<prompt>"}]}]}

Responses may be ``{"text": "..."}`` or OpenAI-style
``{"choices": [{"message": {"content": "..."}}]}``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "MSPROMPT_API_KEY"


class BackendError(Exception):
    pass


class TransientBackendError(BackendError):
    """Temporary failure (network, 5xx, 429); retried, then surfaced."""


class FatalBackendError(BackendError):
    """Failure that retrying cannot fix, e.g. bad credentials."""


class ProtocolError(BackendError):
    """The backend answered with a payload we cannot interpret."""


class UnknownPatch(FatalBackendError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_output_tokens: int = 256

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def canonical(self) -> bytes:
        return json.dumps(
            {"max_output_tokens": int(self.max_output_tokens), "temperature": float(self.temperature)},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")


@dataclass(frozen=True)
class ModelRequest:
    prompt_text: str
    images: tuple[bytes, ...]
    params: GenerationParams = field(default_factory=GenerationParams)
    patch_id: str | None = None  # routing/logging only; not part of the cache key

    def __post_init__(self):
        if not self.images:
            raise ValueError("a model request needs at least one image")
        object.__setattr__(self, "images", tuple(self.images))


@dataclass
class ModelResponse:
    text: str
    latency_ms: float
    backend_id: str
    from_cache: bool = False
    retry_count: int = 0


def cache_key(backend_id: str, request: ModelRequest) -> str:
    """SHA-256 over backend id, prompt, images in order, and generation params.

    Every field is length-prefixed so no two distinct inputs share an encoding.
    """
    h = hashlib.sha256()

    def put(data: bytes) -> None:
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)

    put(backend_id.encode("utf-8"))
    put(request.prompt_text.encode("utf-8"))
    h.update(len(request.images).to_bytes(8, "big"))
    for img in request.images:
        put(img)
    put(request.params.canonical())
    return h.hexdigest()


class ResponseCache:
    """One JSON file per digest in a directory. Entries are never removed.

    Writes go through a temp file and ``os.replace``, so concurrent writers of
    the same key leave one complete entry.
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        try:
            return json.loads(self._path(digest).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("ignoring unreadable cache entry %s", digest)
            return None

    def put(self, digest: str, entry: dict) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{digest[:16]}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, indent=2, sort_keys=True)
                f.write("\n")
            os.replace(tmp, self._path(digest))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def __contains__(self, digest: str) -> bool:
        return self._path(digest).exists()

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))


class Backend:
    """Base class: subclasses implement :meth:`complete`."""

    backend_id = "backend"

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, request: ModelRequest) -> str:
        with self._lock:
            self.calls += 1
        return self.complete(request)

    def complete(self, request: ModelRequest) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """Answers from a ``patch_id -> text`` table.

    ``unknown`` decides what happens for patches not in the table: ``"error"``
    raises :class:`UnknownPatch`, ``"empty"`` answers ``""``.
    """

    def __init__(self, answers: Mapping[str, str] | None = None, unknown: str = "error", backend_id: str = "mock"):
        super().__init__()
        if unknown not in ("error", "empty"):
            raise ValueError(f"unknown-patch mode must be 'error' or 'empty', got {unknown!r}")
        self.answers = dict(answers or {})
        self.unknown = unknown
        self.backend_id = backend_id

    def complete(self, request: ModelRequest) -> str:
        try:
            return self.answers[request.patch_id]
        except KeyError:
            if self.unknown == "empty":
                return ""
            raise UnknownPatch(f"mock backend has no answer for patch {request.patch_id!r}") from None


def empty_backend() -> MockBackend:
    return MockBackend(unknown="empty", backend_id="mock-empty")


def mock_from_truth(truth: Mapping[str, frozenset[int]], unknown: str = "error") -> MockBackend:
    """A mock that answers every patch with its true label set in ``(a),(b)`` form."""
    from msprompt.parsing import format_answer

    answers = {pid: format_answer(labels) for pid, labels in truth.items()}
    return MockBackend(answers, unknown=unknown, backend_id="mock-truth")


def _extract_text(payload) -> str:
    if isinstance(payload, dict):
        if isinstance(payload.get("text"), str):
            return payload["text"]
        choices = payload.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message") if isinstance(choices[0], dict) else None
            content = message.get("content") if isinstance(message, dict) else None
            if isinstance(content, str):
                return content
            if content is None and isinstance(message, dict):
                return ""
    raise ProtocolError(f"cannot find answer text in response payload: {str(payload)[:200]}")


class HttpBackend(Backend):
    """Generic JSON chat endpoint. The API key is read from ``MSPROMPT_API_KEY`` unless given."""

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
    ):
        super().__init__()
        if not endpoint_url:
            raise ValueError("endpoint_url is required for the http backend")
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self.backend_id = f"http:{model_name}"

    def payload(self, request: ModelRequest) -> dict:
        content = [
            {"image": base64.b64encode(img).decode("ascii"), "mime": "image/png"} for img in request.images
        ]
        content.append({"text": request.prompt_text})
        return {
            "model": self.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output_tokens,
        }

    def complete(self, request: ModelRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                self.endpoint_url, json=self.payload(request), headers=headers, timeout=self.timeout_s
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(f"transport error: {exc}") from exc
        status = resp.status_code
        if status in (401, 403):
            raise FatalBackendError(f"authentication failed (HTTP {status})")
        if status == 429 or status >= 500:
            raise TransientBackendError(f"HTTP {status}")
        if status >= 400:
            raise FatalBackendError(f"HTTP {status}: {resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {resp.text[:200]}") from exc
        return _extract_text(payload)


class ModelClient:
    """Adds caching, retries with exponential backoff, and an in-flight bound to a backend."""

    def __init__(
        self,
        backend: Backend,
        cache: ResponseCache | None = None,
        max_in_flight: int = 4,
        retries: int = 3,
        backoff_base_ms: float = 500.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.backend = backend
        self.cache = cache
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.backoff_base_ms = backoff_base_ms
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self.cache_hits = 0
        self.backend_calls = 0

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def query(self, request: ModelRequest) -> ModelResponse:
        digest = cache_key(self.backend_id, request)
        if self.cache is not None:
            entry = self.cache.get(digest)
            if entry is not None:
                with self._lock:
                    self.cache_hits += 1
                return ModelResponse(entry["text"], entry.get("latency_ms", 0.0), self.backend_id, from_cache=True)

        attempt = 0
        while True:
            start = time.perf_counter()
            try:
                with self._slots:
                    with self._lock:
                        self.backend_calls += 1
                    text = self.backend(request)
                break
            except TransientBackendError as exc:
                if attempt >= self.retries:
                    raise TransientBackendError(f"giving up after {attempt + 1} attempts: {exc}") from exc
                delay = self.backoff_base_ms * (2 ** attempt) / 1000.0
                log.info("transient backend error (%s); retry %d in %.2fs", exc, attempt + 1, delay)
                self._sleep(delay)
                attempt += 1
        latency_ms = (time.perf_counter() - start) * 1000.0

        if self.cache is not None:
            self.cache.put(digest, {
                "digest": digest,
                "request_summary": {
                    "backend_id": self.backend_id,
                    "patch_id": request.patch_id,
                    "prompt_sha256": hashlib.sha256(request.prompt_text.encode("utf-8")).hexdigest(),
                    "image_sha256": [hashlib.sha256(img).hexdigest() for img in request.images],
                    "params": json.loads(request.params.canonical()),
                },
                "text": text,
                "latency_ms": latency_ms,
                "timestamp": datetime.now(timezone.utc).isoformat(),
            })
        return ModelResponse(text, latency_ms, self.backend_id, from_cache=False, retry_count=attempt)
