"""Model transports: an HTTP chat-completion client and a canned mock.

Mock fixture format (JSON)::

    {"replies": [
        {"kind": "inter_object_vqa", "key": "<video_id>", "replies": ["...", "..."]},
        {"kind": "vqa_answer", "key": "<qa_id or video_id>", "replies": ["B"]},
        {"kind": "diagnostic", "key": "*", "replies": ["[0, 1, ...]"]}
    ]}

Replies for a key are served in order; once exhausted the last one repeats.
Lookup tries the request key (video id, or qa id for answers), then the
payload's video id, then ``"*"`` as a catch-all for that kind.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx

from ..errors import Timeout, TransportError

logger = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "DYNCOG_API_KEY"


class Transport(Protocol):
    def send(self, payload: dict, key: str) -> str: ...


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str = ""
    model: str = ""
    credentials_env: str = DEFAULT_KEY_ENV
    timeout_s: float = 60.0
    transport: str = "mock"           # "http" or "mock"
    fixture: str | Path | None = None
    retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self):
        if self.transport not in ("http", "mock"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.transport == "mock" and self.fixture is None:
            raise ValueError("the mock transport needs a reply fixture")
        if self.transport == "http" and not self.base_url:
            raise ValueError("the http transport needs a base_url")

    def connect(self) -> Transport:
        if self.transport == "mock":
            return MockTransport.from_file(self.fixture)
        return HttpTransport(self.base_url, self.model, self.credentials_env, self.timeout_s)


class MockTransport:
    def __init__(self, replies: Mapping[tuple[str, str], Sequence[str]]):
        self._replies = {k: list(v) for k, v in replies.items()}
        self._cursor: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()
        self.log: list[tuple[str, str]] = []

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MockTransport":
        return cls({(r["kind"], str(r["key"])): r["replies"] for r in doc["replies"]})

    @classmethod
    def from_file(cls, path: str | Path) -> "MockTransport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def send(self, payload: dict, key: str) -> str:
        meta = payload.get("metadata", {})
        kind = meta.get("kind", "")
        candidates = [(kind, key), (kind, str(meta.get("video_id", ""))), (kind, "*")]
        with self._lock:
            for k in candidates:
                if k in self._replies:
                    i = self._cursor.get(k, 0)
                    replies = self._replies[k]
                    self._cursor[k] = i + 1
                    self.log.append(k)
                    return replies[min(i, len(replies) - 1)]
        raise TransportError(f"mock has no reply for kind={kind!r} key={key!r}")


def _inline_images(payload: dict) -> dict:
    """Replace local file references by data URLs before sending."""
    out = json.loads(json.dumps(payload))
    for msg in out.get("messages", []):
        content = msg.get("content")
        if not isinstance(content, list):
            continue
        for part in content:
            if part.get("type") != "image_url":
                continue
            url = part["image_url"]["url"]
            if "://" in url and not url.startswith("file://"):
                continue
            path = Path(url.removeprefix("file://"))
            if path.is_file():
                mime = mimetypes.guess_type(path.name)[0] or "image/png"
                data = base64.b64encode(path.read_bytes()).decode()
                part["image_url"]["url"] = f"data:{mime};base64,{data}"
    out.pop("metadata", None)
    return out


class HttpTransport:
    """Chat-completion client; the bearer token comes from an environment
    variable and is never written anywhere."""

    def __init__(self, base_url: str, model: str, credentials_env: str = DEFAULT_KEY_ENV,
                 timeout_s: float = 60.0, client: httpx.Client | None = None):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.credentials_env = credentials_env
        self.timeout_s = timeout_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def send(self, payload: dict, key: str) -> str:
        body = _inline_images(payload)
        body["model"] = body.get("model") or self.model
        headers = {}
        token = os.environ.get(self.credentials_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._client.post(self.url, json=body, headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
        except httpx.TimeoutException as exc:
            raise Timeout(f"no reply from {self.url} within {self.timeout_s} s") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape from {self.url}") from exc
