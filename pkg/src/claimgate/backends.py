"""Backend abstraction: live HTTP clients plus deterministic test backends.

Chat follows an OpenAI-compatible /v1/chat/completions shape; segmentation
follows the /v1/segment wire contract. Record/replay keys every request by
a canonical content hash so semantically identical requests collide and
replay is exact.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Sequence, Union

import requests

from .imaging import image_content_hash, image_to_base64, load_image
from .prompts import Part, PromptBundle


class BackendUnavailable(RuntimeError):
    """Backend unreachable after bounded retries."""


class MalformedResponse(ValueError):
    """Backend answered but the payload does not fit the wire contract."""


class CacheMiss(KeyError):
    """Replay store has no response for this request."""

    def __init__(self, kind: str, key: str, summary: str):
        self.kind = kind
        self.key = key
        self.summary = summary
        super().__init__(f"{kind} cache miss for {key} ({summary})")


class ScriptError(AssertionError):
    """Scripted backend got a request its script does not cover."""


class BackendRole(str, Enum):
    INITIALIZER = "initializer"
    JUDGE = "judge"
    REFINER = "refiner"
    COLOR_OBSERVER = "color_observer"
    GROUNDER = "grounder"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    parts: tuple[Part, ...]


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    model: str = "default"

    @classmethod
    def from_bundle(
        cls, bundle: PromptBundle, model: str = "default", max_tokens: int = 1024
    ) -> "ChatRequest":
        return cls(
            messages=(ChatMessage("user", tuple(bundle.messages)),),
            model=model,
            max_tokens=max_tokens,
        )

    def text(self) -> str:
        chunks = []
        for msg in self.messages:
            chunks.extend(p.payload for p in msg.parts if p.kind == "text")
        return "\n".join(chunks)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    latency_ms: int = 0


@dataclass(frozen=True)
class SegmentRequest:
    image: Any
    concept: str
    max_instances: int
    min_score: float


def _image_key(payload: Any) -> str:
    if isinstance(payload, (str, Path)):
        try:
            return image_content_hash(load_image(payload))
        except Exception:
            return hashlib.sha256(str(payload).encode()).hexdigest()
    return image_content_hash(load_image(payload))


def canonical_chat_key(request: ChatRequest) -> str:
    doc = {
        "kind": "chat",
        "model": request.model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [
            {
                "role": msg.role,
                "content": [
                    {"type": "text", "text": p.payload}
                    if p.kind == "text"
                    else {"type": "image", "sha256": _image_key(p.payload)}
                    for p in msg.parts
                ],
            }
            for msg in request.messages
        ],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def canonical_segment_key(request: SegmentRequest) -> str:
    doc = {
        "kind": "segment",
        "concept": request.concept,
        "max_instances": request.max_instances,
        "min_score": request.min_score,
        "image": _image_key(request.image),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


class SegmentBackend(Protocol):
    def segment(self, request: SegmentRequest) -> dict: ...


def _request_summary(request: ChatRequest) -> str:
    text = request.text().strip().replace("\n", " ")
    return text[:100]


class _RetryingHttp:
    """Shared bounded-retry POST with exponential backoff."""

    def __init__(
        self,
        timeout: float,
        max_retries: int,
        backoff_s: float,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.session = session or requests.Session()
        self.sleep = sleep
        self.events: list[dict] = []

    def post(self, url: str, payload: dict, headers: dict) -> dict:
        last_error: Optional[str] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.events.append({"event": "retry", "attempt": attempt, "url": url})
                self.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise MalformedResponse(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"non-JSON response from {url}: {exc}") from exc
        raise BackendUnavailable(
            f"{url} unavailable after {self.max_retries + 1} attempts: {last_error}"
        )


def _encode_part(part: Part) -> dict:
    if part.kind == "text":
        return {"type": "text", "text": part.payload}
    b64 = image_to_base64(load_image(part.payload))
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}


def _extract_text(body: dict) -> str:
    try:
        choice = body["choices"][0]
        content = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"chat response missing choices[0].message.content: {exc}")
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        texts = [c.get("text", "") for c in content if isinstance(c, dict) and c.get("type") == "text"]
        if texts:
            return "".join(texts)
    raise MalformedResponse(f"unsupported chat content shape: {type(content).__name__}")


class HttpChatBackend:
    """Live OpenAI-compatible chat client with bounded retries."""

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        max_retries: int = 2,
        backoff_s: float = 0.25,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.http = _RetryingHttp(timeout, max_retries, backoff_s, session, sleep)

    @property
    def events(self) -> list[dict]:
        return self.http.events

    def describe(self) -> str:
        return f"http:{self.endpoint} model={self.model}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model if request.model != "default" else self.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": msg.role, "content": [_encode_part(p) for p in msg.parts]}
                for msg in request.messages
            ],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        start = time.monotonic()
        body = self.http.post(f"{self.endpoint}/v1/chat/completions", payload, headers)
        latency = int((time.monotonic() - start) * 1000)
        return ChatResponse(
            text=_extract_text(body),
            usage=body.get("usage", {}) or {},
            latency_ms=latency,
        )


class HttpSegmentBackend:
    """Live client for the segmentation wire contract."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff_s: float = 0.25,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.http = _RetryingHttp(timeout, max_retries, backoff_s, session, sleep)

    @property
    def events(self) -> list[dict]:
        return self.http.events

    def describe(self) -> str:
        return f"http:{self.endpoint}"

    def segment(self, request: SegmentRequest) -> dict:
        if isinstance(request.image, str) and not Path(request.image).exists():
            image_field: str = request.image  # server-visible path or handle
        else:
            image_field = image_to_base64(load_image(request.image))
        payload = {
            "image": image_field,
            "concept": request.concept,
            "max_instances": request.max_instances,
            "min_score": request.min_score,
        }
        return self.http.post(
            f"{self.endpoint}/v1/segment", payload, {"Content-Type": "application/json"}
        )


Matcher = Union[str, Callable[[ChatRequest], bool]]


class ScriptedChatBackend:
    """Fixture backend: ordered (matcher, response) script; strict by default."""

    def __init__(self, script: Sequence[tuple[Matcher, str]]):
        self.script = list(script)
        self.cursor = 0

    def chat(self, request: ChatRequest) -> ChatResponse:
        if self.cursor >= len(self.script):
            raise ScriptError(
                f"script exhausted after {len(self.script)} calls; got: "
                f"{_request_summary(request)!r}"
            )
        matcher, response = self.script[self.cursor]
        if isinstance(matcher, str):
            ok = matcher in request.text()
            expected = f"substring {matcher!r}"
        else:
            ok = matcher(request)
            expected = getattr(matcher, "__name__", repr(matcher))
        if not ok:
            raise ScriptError(
                f"request {self.cursor} does not match expected {expected}; got: "
                f"{_request_summary(request)!r}"
            )
        self.cursor += 1
        return ChatResponse(text=response)


class ResponseStore:
    """On-disk map of canonical request hashes to responses."""

    VERSION = 1

    def __init__(self) -> None:
        self.chat: dict[str, dict] = {}
        self.segment: dict[str, dict] = {}

    def to_dict(self) -> dict:
        return {"version": self.VERSION, "chat": self.chat, "segment": self.segment}

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ResponseStore":
        data = json.loads(Path(path).read_text())
        if data.get("version") != cls.VERSION:
            raise ValueError(f"unsupported response store version {data.get('version')!r}")
        store = cls()
        store.chat = dict(data.get("chat", {}))
        store.segment = dict(data.get("segment", {}))
        return store


class RecordingChatBackend:
    def __init__(self, inner: ChatBackend, store: ResponseStore):
        self.inner = inner
        self.store = store

    def chat(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.chat(request)
        key = canonical_chat_key(request)
        self.store.chat[key] = {
            "text": response.text,
            "usage": dict(response.usage),
            "summary": _request_summary(request),
        }
        return response


class ReplayChatBackend:
    def __init__(self, store: ResponseStore):
        self.store = store

    def chat(self, request: ChatRequest) -> ChatResponse:
        key = canonical_chat_key(request)
        entry = self.store.chat.get(key)
        if entry is None:
            raise CacheMiss("chat", key, _request_summary(request))
        return ChatResponse(text=entry["text"], usage=dict(entry.get("usage", {})))


class RecordingSegmentBackend:
    def __init__(self, inner: SegmentBackend, store: ResponseStore):
        self.inner = inner
        self.store = store

    def segment(self, request: SegmentRequest) -> dict:
        response = self.inner.segment(request)
        self.store.segment[canonical_segment_key(request)] = response
        return response


class ReplaySegmentBackend:
    def __init__(self, store: ResponseStore):
        self.store = store

    def segment(self, request: SegmentRequest) -> dict:
        key = canonical_segment_key(request)
        entry = self.store.segment.get(key)
        if entry is None:
            raise CacheMiss("segment", key, f"concept={request.concept!r}")
        return entry


@dataclass
class Backends:
    """Per-role backend bindings; every chat role bound exactly once."""

    initializer: ChatBackend
    judge: ChatBackend
    refiner: ChatBackend
    color_observer: Optional[ChatBackend]
    grounder: SegmentBackend

    def chat_for(self, role: BackendRole) -> Optional[ChatBackend]:
        return {
            BackendRole.INITIALIZER: self.initializer,
            BackendRole.JUDGE: self.judge,
            BackendRole.REFINER: self.refiner,
            BackendRole.COLOR_OBSERVER: self.color_observer,
        }[role]

    def bindings(self) -> dict[str, str]:
        def describe(backend: Any) -> str:
            if backend is None:
                return "none"
            fn = getattr(backend, "describe", None)
            return fn() if fn else type(backend).__name__

        return {
            role.value: describe(
                self.grounder if role is BackendRole.GROUNDER else self.chat_for(role)
            )
            for role in BackendRole
        }

    def recorded(self, store: ResponseStore) -> "Backends":
        return Backends(
            initializer=RecordingChatBackend(self.initializer, store),
            judge=RecordingChatBackend(self.judge, store),
            refiner=RecordingChatBackend(self.refiner, store),
            color_observer=(
                RecordingChatBackend(self.color_observer, store)
                if self.color_observer
                else None
            ),
            grounder=RecordingSegmentBackend(self.grounder, store),
        )


def replay_backends(store: ResponseStore, with_color: bool = True) -> Backends:
    chat = ReplayChatBackend(store)
    return Backends(
        initializer=chat,
        judge=chat,
        refiner=chat,
        color_observer=chat if with_color else None,
        grounder=ReplaySegmentBackend(store),
    )
