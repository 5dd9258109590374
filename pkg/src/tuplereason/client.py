"""Chat-completion boundary: a live OpenAI-compatible HTTP backend plus
record/replay backends that make every downstream test deterministic.

Transcript entries are keyed by a digest of (messages, params, ordinal),
where the ordinal counts repeats of an identical request so that sampled
runs can store distinct responses for byte-identical prompts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx

from .prompts import ChatMessage

logger = logging.getLogger(__name__)

API_TOKEN_ENV = "OPENAI_API_KEY"

MAX_RETRIES = 3
BACKOFF_START_S = 1.0
DEFAULT_TIMEOUT_S = 120.0
RETRYABLE_STATUSES = {429, 500, 502, 503, 504}

CALL_KINDS = ("step1", "step2", "feedback")


class TransportError(RuntimeError):
    """Network-level failure that survived the retry budget."""


class EndpointError(RuntimeError):
    """Non-retryable (or retry-exhausted) HTTP error from the endpoint."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint returned {status}: {body[:200]}")


class ReplayMiss(KeyError):
    """A replay lookup found no transcript entry for the request digest."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(key)


@dataclass(frozen=True)
class GenParams:
    model_name: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024
    seed_hint: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p out of range: {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive: {self.max_tokens}")


def deterministic_params(model_name: str, **overrides) -> GenParams:
    return GenParams(model_name, temperature=0.0, top_p=1.0, **overrides)


def sampled_params(model_name: str, temperature: float = 0.5, **overrides) -> GenParams:
    return GenParams(model_name, temperature=temperature, top_p=1.0, **overrides)


@dataclass
class CallTally:
    step1_calls: int = 0
    step2_calls: int = 0
    feedback_calls: int = 0

    def total(self) -> int:
        return self.step1_calls + self.step2_calls + self.feedback_calls

    def as_dict(self) -> dict[str, int]:
        return {
            "step1_calls": self.step1_calls,
            "step2_calls": self.step2_calls,
            "feedback_calls": self.feedback_calls,
        }


def _canonical_request(messages: Sequence[ChatMessage], params: GenParams) -> dict:
    return {
        "messages": [{"role": m.role, "content": m.content} for m in messages],
        "params": {
            "model_name": params.model_name,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "seed_hint": params.seed_hint,
        },
    }


def request_fingerprint(messages: Sequence[ChatMessage], params: GenParams) -> str:
    """Stable digest of a request, independent of process or call order."""
    payload = json.dumps(_canonical_request(messages, params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def request_key(messages: Sequence[ChatMessage], params: GenParams, ordinal: int) -> str:
    base = request_fingerprint(messages, params)
    return hashlib.sha256(f"{base}:{ordinal}".encode("ascii")).hexdigest()


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    key: str
    request: dict
    response: str


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)

    def __post_init__(self):
        keys = [e.key for e in self.entries]
        if len(keys) != len(set(keys)):
            raise ValueError("transcript contains duplicate keys")
        self._by_key = {e.key: e for e in self.entries}
        self._lock = threading.Lock()

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            if entry.key in self._by_key:
                raise ValueError(f"duplicate transcript key {entry.key}")
            self.entries.append(entry)
            self._by_key[entry.key] = entry

    def get(self, key: str) -> TranscriptEntry | None:
        return self._by_key.get(key)

    def save(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                record = {"key": e.key, "request": e.request, "response": e.response}
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "Transcript":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                entries.append(
                    TranscriptEntry(record["key"], record["request"], record["response"])
                )
        return cls(entries)


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------


class ChatClient:
    """Base chat client; subclasses implement ``_complete``.

    ``chat`` tags each call as step1 / step2 / feedback so per-run usage can
    be reported. Counters are shared across threads.
    """

    def __init__(self):
        self._tally = CallTally()
        self._tally_lock = threading.Lock()

    def chat(
        self,
        messages: Sequence[ChatMessage],
        params: GenParams,
        kind: str = "step1",
    ) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        if kind not in CALL_KINDS:
            raise ValueError(f"unknown call kind {kind!r}")
        with self._tally_lock:
            setattr(self._tally, f"{kind}_calls", getattr(self._tally, f"{kind}_calls") + 1)
        return self._complete(messages, params)

    def call_tally(self) -> CallTally:
        with self._tally_lock:
            return CallTally(**self._tally.as_dict())

    def reset_tally(self) -> None:
        with self._tally_lock:
            self._tally = CallTally()

    def _complete(self, messages: Sequence[ChatMessage], params: GenParams) -> str:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """Live backend for any OpenAI-compatible /chat/completions endpoint.

    Transient transport failures are retried up to MAX_RETRIES times with
    exponential backoff starting at one second.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        super().__init__()
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_TOKEN_ENV, "")
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def _complete(self, messages: Sequence[ChatMessage], params: GenParams) -> str:
        body = {
            "model": params.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.seed_hint is not None:
            body["seed"] = params.seed_hint
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_exc: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                self._sleep(BACKOFF_START_S * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                logger.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                last_exc = exc
                continue
            if response.status_code in RETRYABLE_STATUSES and attempt < MAX_RETRIES:
                logger.warning("retryable status %d (attempt %d)", response.status_code, attempt + 1)
                last_exc = EndpointError(response.status_code, response.text)
                continue
            if response.status_code != 200:
                raise EndpointError(response.status_code, response.text)
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise EndpointError(response.status_code, f"malformed body: {exc}") from exc
        if isinstance(last_exc, EndpointError):
            raise last_exc
        raise TransportError(f"gave up after {MAX_RETRIES} retries: {last_exc}")


class RecordingClient(ChatClient):
    """Forwards to an inner client and appends each exchange to a transcript."""

    def __init__(self, inner: ChatClient, transcript: Transcript | None = None):
        super().__init__()
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()
        self._ordinals: dict[str, int] = {}
        self._lock = threading.Lock()

    def _complete(self, messages: Sequence[ChatMessage], params: GenParams) -> str:
        fingerprint = request_fingerprint(messages, params)
        with self._lock:
            ordinal = self._ordinals.get(fingerprint, 0)
            self._ordinals[fingerprint] = ordinal + 1
        response = self.inner._complete(messages, params)
        request = dict(_canonical_request(messages, params), ordinal=ordinal)
        self.transcript.append(
            TranscriptEntry(request_key(messages, params, ordinal), request, response)
        )
        return response


class ReplayClient(ChatClient):
    """Replays a transcript; performs no network operations at all."""

    def __init__(self, transcript: Transcript):
        super().__init__()
        self.transcript = transcript
        self._ordinals: dict[str, int] = {}
        self._lock = threading.Lock()

    def _complete(self, messages: Sequence[ChatMessage], params: GenParams) -> str:
        fingerprint = request_fingerprint(messages, params)
        with self._lock:
            ordinal = self._ordinals.get(fingerprint, 0)
            self._ordinals[fingerprint] = ordinal + 1
        key = request_key(messages, params, ordinal)
        entry = self.transcript.get(key)
        if entry is None:
            raise ReplayMiss(key)
        return entry.response
