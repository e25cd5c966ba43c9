"""Chat clients: live HTTP, transcript replay, and a recording wrapper.

A conversation is a list of :class:`Message`. Images travel as binary PPM so
their hashes are stable; the HTTP client converts them to PNG on the wire.
Replay looks responses up by the hash of the whole conversation, which makes
it stateless and safe to share between threads.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

ENV_ENDPOINT = "BLOX_LM_ENDPOINT"
ENV_MODEL = "BLOX_LM_MODEL"
ENV_KEY = "BLOX_LM_KEY"


class LmError(Exception):
    pass


class Exhausted(LmError):
    """Transport retries used up."""


class ClientUnconfigured(LmError):
    pass


class ReplayMiss(LmError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    images: tuple[bytes, ...] = ()

    def digest_dict(self) -> dict:
        return {
            "role": self.role,
            "text": self.text,
            "images": [hashlib.sha256(im).hexdigest() for im in self.images],
        }


def conversation_key(conversation: Sequence[Message]) -> str:
    blob = json.dumps([m.digest_dict() for m in conversation], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode()).hexdigest()


class LmClient(Protocol):
    model: str

    def send(self, conversation: Sequence[Message]) -> str: ...


@dataclass
class Exchange:
    key: str
    request: list[dict]
    response: str
    timestamp: str

    def to_dict(self) -> dict:
        return {"key": self.key, "request": self.request, "response": self.response, "timestamp": self.timestamp}


@dataclass
class Transcript:
    id: str
    model: str = ""
    exchanges: list[Exchange] = field(default_factory=list)

    def append(self, exchange: Exchange) -> None:
        self.exchanges.append(exchange)

    def to_json(self) -> str:
        doc = {"id": self.id, "model": self.model, "exchanges": [e.to_dict() for e in self.exchanges]}
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        doc = json.loads(text)
        return cls(doc["id"], doc.get("model", ""), [Exchange(**e) for e in doc.get("exchanges", [])])

    def save(self, directory) -> Path:
        """Write under ``directory`` as ``<digest>.json``; identical transcripts share one file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.digest()[:16]}.json"
        path.write_text(self.to_json())
        return path


def load_transcripts(directory) -> list[Transcript]:
    return [Transcript.from_json(p.read_text()) for p in sorted(Path(directory).glob("*.json"))]


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ReplayClient:
    """Answer from recorded exchanges, keyed by the full conversation hash."""

    model = "replay"

    def __init__(self, transcripts: Sequence[Transcript]):
        self._table: dict[str, Exchange] = {}
        for t in transcripts:
            for e in t.exchanges:
                self._table.setdefault(e.key, e)
        models = sorted({t.model for t in transcripts if t.model})
        if models:
            self.model = models[0]

    @classmethod
    def from_dir(cls, directory) -> "ReplayClient":
        directory = Path(directory)
        if not directory.is_dir():
            raise ClientUnconfigured(f"replay directory {directory} does not exist")
        return cls(load_transcripts(directory))

    def __len__(self):
        return len(self._table)

    def lookup(self, conversation: Sequence[Message]) -> Exchange:
        key = conversation_key(conversation)
        try:
            return self._table[key]
        except KeyError:
            last = conversation[-1].text[:80] if conversation else ""
            raise ReplayMiss(f"no recorded response for conversation {key[:12]} ({last!r})") from None

    def send(self, conversation: Sequence[Message]) -> str:
        return self.lookup(conversation).response


class RecordingClient:
    """Forward to ``inner`` and append every exchange to ``transcript``.

    Replayed exchanges keep their recorded timestamps so a replayed run
    re-emits byte-identical transcripts.
    """

    def __init__(self, inner: LmClient, transcript: Transcript | None = None, clock: Callable[[], str] | None = None):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript("session", inner.model)
        if not self.transcript.model:
            self.transcript.model = inner.model
        self.clock = clock
        self._lock = threading.Lock()

    @property
    def model(self) -> str:
        return self.inner.model

    def send(self, conversation: Sequence[Message]) -> str:
        if isinstance(self.inner, ReplayClient):
            ex = self.inner.lookup(conversation)
            response, stamp = ex.response, ex.timestamp
        else:
            response = self.inner.send(conversation)
            stamp = (self.clock or _now)()
        exchange = Exchange(
            conversation_key(conversation), [m.digest_dict() for m in conversation], response, stamp
        )
        with self._lock:
            self.transcript.append(exchange)
        return response


class HttpClient:
    """OpenAI-style chat-completions client with bounded retries."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        key: str,
        *,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.key = key
        self.retries = retries
        self.backoff = backoff
        self.sleep = sleep
        self._http = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, environ=None, **kwargs) -> "HttpClient":
        env = os.environ if environ is None else environ
        missing = [v for v in (ENV_ENDPOINT, ENV_MODEL, ENV_KEY) if not env.get(v)]
        if missing:
            raise ClientUnconfigured(f"client unconfigured: set {', '.join(missing)}")
        return cls(env[ENV_ENDPOINT], env[ENV_MODEL], env[ENV_KEY], **kwargs)

    def payload(self, conversation: Sequence[Message]) -> dict:
        from ..render import ppm_to_png

        messages = []
        for m in conversation:
            if not m.images:
                messages.append({"role": m.role, "content": m.text})
                continue
            content = [{"type": "text", "text": m.text}]
            for im in m.images:
                b64 = base64.b64encode(ppm_to_png(im)).decode()
                content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
            messages.append({"role": m.role, "content": content})
        return {"model": self.model, "messages": messages}

    def send(self, conversation: Sequence[Message]) -> str:
        body = self.payload(conversation)
        headers = {"Authorization": f"Bearer {self.key}"}
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._http.post(self.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                log.warning("transport error on attempt %d: %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = LmError(f"HTTP {resp.status_code}")
                log.warning("retryable HTTP %d on attempt %d", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise LmError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise LmError(f"malformed completion: {exc}") from exc
        raise Exhausted(f"gave up after {self.retries + 1} attempts: {last}")


def client_from_mode(mode: str) -> LmClient:
    """``live`` or ``replay:<dir>``."""
    if mode == "live":
        return HttpClient.from_env()
    if mode.startswith("replay:"):
        return ReplayClient.from_dir(mode.split(":", 1)[1])
    raise ValueError(f"unknown client mode {mode!r}; use 'live' or 'replay:<dir>'")
