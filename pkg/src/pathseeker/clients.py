"""Chat model clients: scripted (tests), disk-cached wrapper, and an HTTP client."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from pathlib import Path
from typing import Callable, Protocol, Sequence, Union

import httpx

Message = dict  # {"role": ..., "content": ...}


class ChatTransportError(RuntimeError):
    """The model endpoint could not produce a response."""


class ScriptExhausted(ChatTransportError):
    pass


class ChatClient(Protocol):
    def complete(self, messages: Sequence[Message], **sampling) -> str: ...


Responder = Callable[[Sequence[Message]], str]


class ScriptedClient:
    """Replays fixed responses in order, or delegates to a callable.

    Every request is kept in ``requests`` for inspection.
    """

    model = "scripted"

    def __init__(self, responses: Union[Sequence[str], Responder], cycle: bool = False):
        self._responder = responses if callable(responses) else None
        self._responses = [] if callable(responses) else list(responses)
        self.cycle = cycle
        self._pos = 0
        self._lock = threading.Lock()
        self.requests: list[list[Message]] = []

    def complete(self, messages: Sequence[Message], **sampling) -> str:
        with self._lock:
            self.requests.append([dict(m) for m in messages])
            if self._responder is not None:
                return self._responder(messages)
            if self._pos >= len(self._responses):
                if not (self.cycle and self._responses):
                    raise ScriptExhausted("scripted client has no responses left")
                self._pos = 0
            text = self._responses[self._pos]
            self._pos += 1
            return text


def request_key(model: str, messages: Sequence[Message], sampling: dict) -> str:
    payload = json.dumps({"model": model, "messages": list(messages), "sampling": sampling}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CachedClient:
    """Disk-backed response cache keyed by the hash of model, messages and sampling."""

    def __init__(self, inner: ChatClient, cache_dir: str | Path):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.model = getattr(inner, "model", type(inner).__name__)
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def complete(self, messages: Sequence[Message], **sampling) -> str:
        key = request_key(self.model, messages, sampling)
        path = self._path(key)
        if path.exists():
            self.hits += 1
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        self.misses += 1
        text = self.inner.complete(messages, **sampling)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"model": self.model, "messages": list(messages), "sampling": sampling, "response": text}, fh, ensure_ascii=False)
        os.replace(tmp, path)
        return text


class HttpChatClient:
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 120.0, transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, messages: Sequence[Message], **sampling) -> str:
        body = {"model": self.model, "messages": list(messages)}
        body.update({k: v for k, v in sampling.items() if v is not None})
        try:
            resp = self._http.post(f"{self.base_url}/chat/completions", json=body)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ChatTransportError(f"chat endpoint failed: {exc}") from exc


def complete_with_retries(
    client: ChatClient,
    messages: Sequence[Message],
    sampling: dict | None = None,
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Call ``client`` with up to ``retries`` retries on transport errors, doubling the wait."""
    sampling = sampling or {}
    for attempt in range(retries + 1):
        try:
            return client.complete(messages, **sampling)
        except ScriptExhausted:
            raise
        except ChatTransportError:
            if attempt == retries:
                raise
            sleep(backoff * 2**attempt)
    raise AssertionError("unreachable")
