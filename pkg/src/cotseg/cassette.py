"""Record/replay cassettes for deterministic offline agent runs.

A cassette is JSON Lines, one interaction per line:
{"kind": ..., "digest": ..., "response_b64": ...}. Replay consumes
entries strictly in call order and demands that each live request's
digest equals the recorded one; any divergence raises. Request digests
hash a canonical JSON of the request with image bytes fingerprinted
separately, so they are insensitive to key ordering but pinned to pixel
content.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Sequence

from .agents import (
    AgentBundle,
    ChatAgent,
    ChatRequest,
    ChatResponse,
    RetrievalAgent,
    RetrievedContext,
    SegmentationAgent,
    check_score_dims,
)
from .core import (
    ImageData,
    MetaQuery,
    ScoreMap,
    SegmentorCapabilities,
    canonical_json,
)
from .errors import CassetteMismatchError

KIND_CHAT = "chat"
KIND_SEGMENT = "segment"
KIND_CAPABILITIES = "capabilities"
KIND_RETRIEVE = "retrieve"


def image_fingerprint(image: ImageData) -> str:
    h = hashlib.sha256()
    h.update(f"{image.width}x{image.height}:".encode("ascii"))
    h.update(image.pixels)
    return h.hexdigest()


def _digest(payload: dict) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def chat_digest(request: ChatRequest) -> str:
    return _digest({
        "kind": KIND_CHAT,
        "turns": [
            {"role": t.role, "text": t.text, "images": [image_fingerprint(i) for i in t.images]}
            for t in request.turns
        ],
    })


def segment_digest(image: ImageData, meta_query: MetaQuery) -> str:
    return _digest({
        "kind": KIND_SEGMENT,
        "image": image_fingerprint(image),
        "width": image.width,
        "height": image.height,
        "meta_query": meta_query.to_json_dict(),
    })


def capabilities_digest() -> str:
    return _digest({"kind": KIND_CAPABILITIES})


def retrieve_digest(keywords: Sequence[str]) -> str:
    return _digest({"kind": KIND_RETRIEVE, "keywords": list(keywords)})


def _encode_chat_response(response: ChatResponse) -> bytes:
    # Latency is wall clock and deliberately not recorded.
    return canonical_json({"text": response.text, "usage": dict(response.usage) if response.usage else None}).encode("utf-8")


def _decode_chat_response(data: bytes) -> ChatResponse:
    d = json.loads(data.decode("utf-8"))
    return ChatResponse(d["text"], 0.0, d.get("usage"))


def _encode_context(context: RetrievedContext | None) -> bytes:
    if context is None:
        return b"null"
    return canonical_json({
        "snippets": list(context.snippets),
        "images": [
            {"png_b64": base64.b64encode(i.to_png()).decode("ascii"), "source_id": i.source_id}
            for i in context.images
        ],
    }).encode("utf-8")


def _decode_context(data: bytes) -> RetrievedContext | None:
    d = json.loads(data.decode("utf-8"))
    if d is None:
        return None
    return RetrievedContext(
        tuple(d.get("snippets") or ()),
        tuple(
            ImageData.from_png(base64.b64decode(i["png_b64"]), i.get("source_id", ""))
            for i in d.get("images") or ()
        ),
    )


class CassetteRecorder:
    """Appends every interaction of the wrapped agents to one cassette
    file, preserving call order across agent kinds."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._file = self._path.open("w", encoding="utf-8")

    def _append(self, kind: str, digest: str, response: bytes) -> None:
        line = canonical_json({
            "kind": kind,
            "digest": digest,
            "response_b64": base64.b64encode(response).decode("ascii"),
        })
        self._file.write(line + "\n")
        self._file.flush()

    def wrap(self, bundle: AgentBundle) -> AgentBundle:
        return AgentBundle(
            chat=_RecordingChat(bundle.chat, self),
            segmenter=_RecordingSegmenter(bundle.segmenter, self),
            retrieval=_RecordingRetrieval(bundle.retrieval, self) if bundle.retrieval is not None else None,
        )

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "CassetteRecorder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class _RecordingChat:
    def __init__(self, inner: ChatAgent, recorder: CassetteRecorder):
        self._inner = inner
        self._recorder = recorder

    def chat(self, request: ChatRequest) -> ChatResponse:
        response = self._inner.chat(request)
        self._recorder._append(KIND_CHAT, chat_digest(request), _encode_chat_response(response))
        return response


class _RecordingSegmenter:
    def __init__(self, inner: SegmentationAgent, recorder: CassetteRecorder):
        self._inner = inner
        self._recorder = recorder

    def capabilities(self) -> SegmentorCapabilities:
        caps = self._inner.capabilities()
        self._recorder._append(KIND_CAPABILITIES, capabilities_digest(), canonical_json(caps.to_json_dict()).encode("utf-8"))
        return caps

    def segment(self, image: ImageData, meta_query: MetaQuery) -> ScoreMap:
        scores = check_score_dims(self._inner.segment(image, meta_query), image)
        self._recorder._append(KIND_SEGMENT, segment_digest(image, meta_query), scores.to_png16())
        return scores


class _RecordingRetrieval:
    def __init__(self, inner: RetrievalAgent, recorder: CassetteRecorder):
        self._inner = inner
        self._recorder = recorder

    def retrieve(self, keywords: Sequence[str]) -> RetrievedContext | None:
        context = self._inner.retrieve(keywords)
        self._recorder._append(KIND_RETRIEVE, retrieve_digest(keywords), _encode_context(context))
        return context


class ReplayCassette:
    """Shared strictly-ordered cursor over a recorded cassette."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._entries: list[tuple[str, str, bytes]] = []
        for i, line in enumerate(self._path.read_text(encoding="utf-8").splitlines()):
            if not line.strip():
                continue
            d = json.loads(line)
            self._entries.append((d["kind"], d["digest"], base64.b64decode(d["response_b64"])))
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def position(self) -> int:
        return self._cursor

    def next(self, kind: str, digest: str) -> bytes:
        if self._cursor >= len(self._entries):
            raise CassetteMismatchError(f"cassette {self._path.name} exhausted after {self._cursor} interactions")
        got_kind, got_digest, response = self._entries[self._cursor]
        if got_kind != kind:
            raise CassetteMismatchError(
                f"cassette {self._path.name} entry {self._cursor}: expected kind {got_kind!r}, live call is {kind!r}"
            )
        if got_digest != digest:
            raise CassetteMismatchError(
                f"cassette {self._path.name} entry {self._cursor}: request digest mismatch"
            )
        self._cursor += 1
        return response


class ReplayChat:
    def __init__(self, cassette: ReplayCassette):
        self._cassette = cassette

    def chat(self, request: ChatRequest) -> ChatResponse:
        return _decode_chat_response(self._cassette.next(KIND_CHAT, chat_digest(request)))


class ReplaySegmenter:
    def __init__(self, cassette: ReplayCassette):
        self._cassette = cassette

    def capabilities(self) -> SegmentorCapabilities:
        data = self._cassette.next(KIND_CAPABILITIES, capabilities_digest())
        return SegmentorCapabilities.from_json_dict(json.loads(data.decode("utf-8")))

    def segment(self, image: ImageData, meta_query: MetaQuery) -> ScoreMap:
        data = self._cassette.next(KIND_SEGMENT, segment_digest(image, meta_query))
        return check_score_dims(ScoreMap.from_png16(data), image)


class ReplayRetrieval:
    def __init__(self, cassette: ReplayCassette):
        self._cassette = cassette

    def retrieve(self, keywords: Sequence[str]) -> RetrievedContext | None:
        return _decode_context(self._cassette.next(KIND_RETRIEVE, retrieve_digest(keywords)))


def record_bundle(bundle: AgentBundle, path: str | Path) -> tuple[AgentBundle, CassetteRecorder]:
    """Wrap a bundle so every interaction lands in the cassette at
    `path`; the caller closes the recorder."""
    recorder = CassetteRecorder(path)
    return recorder.wrap(bundle), recorder


def replay_bundle(path: str | Path) -> AgentBundle:
    """Build a bundle that serves all agent calls from the cassette at
    `path`, in strict recorded order."""
    cassette = ReplayCassette(path)
    return AgentBundle(
        chat=ReplayChat(cassette),
        segmenter=ReplaySegmenter(cassette),
        retrieval=ReplayRetrieval(cassette),
    )
