"""Agent interfaces and deterministic test backends.

Three agent roles exist: a chat model (drives reasoning, evaluation, and
the revert judgment), a segmenter (turns meta-queries into score maps),
and an optional retrieval source. HTTP implementations live in
http_agents; cassette record/replay wrappers live in cassette.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import (
    ImageData,
    MetaQuery,
    RasterMask,
    ScoreMap,
    SegmentorCapabilities,
)
from .errors import DIMENSION_MISMATCH, EMPTY_OUTPUT, TransportError, ValidationError


@dataclass(frozen=True)
class ChatTurn:
    role: str  # "system" | "user" | "assistant"
    text: str
    images: tuple[ImageData, ...] = ()

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValidationError(EMPTY_OUTPUT, f"unknown chat role {self.role!r}")
        object.__setattr__(self, "images", tuple(self.images))
        if self.role != "user" and self.images:
            raise ValidationError(EMPTY_OUTPUT, "only user turns may attach images")


@dataclass(frozen=True)
class ChatRequest:
    turns: tuple[ChatTurn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not any(t.role == "user" for t in self.turns):
            raise ValidationError(EMPTY_OUTPUT, "chat request needs at least one user turn")

    def all_text(self) -> str:
        return "\n".join(t.text for t in self.turns)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_seconds: float = 0.0
    usage: Mapping[str, int] | None = None


@dataclass(frozen=True)
class RetrievedContext:
    """External knowledge injected into reasoning; never constructed empty."""

    snippets: tuple[str, ...] = ()
    images: tuple[ImageData, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "snippets", tuple(self.snippets))
        object.__setattr__(self, "images", tuple(self.images))
        if not self.snippets and not self.images:
            raise ValidationError(EMPTY_OUTPUT, "retrieved context must carry snippets or images")


@runtime_checkable
class ChatAgent(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


@runtime_checkable
class SegmentationAgent(Protocol):
    def capabilities(self) -> SegmentorCapabilities: ...

    def segment(self, image: ImageData, meta_query: MetaQuery) -> ScoreMap: ...


@runtime_checkable
class RetrievalAgent(Protocol):
    def retrieve(self, keywords: Sequence[str]) -> RetrievedContext | None: ...


@dataclass(frozen=True)
class AgentBundle:
    chat: ChatAgent
    segmenter: SegmentationAgent
    retrieval: RetrievalAgent | None = None


def check_score_dims(scores: ScoreMap, image: ImageData) -> ScoreMap:
    """Enforce the interface guarantee that score maps match the image."""
    if scores.width != image.width or scores.height != image.height:
        raise ValidationError(
            DIMENSION_MISMATCH,
            f"score map {scores.width}x{scores.height} vs image {image.width}x{image.height}",
        )
    return scores


class ScriptedChat:
    """Keyword-table chat backend for tests.

    The first table key found (case-insensitively) in the request text
    wins, in insertion order. A str value is returned on every hit; a
    list value is consumed one response per hit and errors when
    exhausted.
    """

    def __init__(self, table: Mapping[str, str | Sequence[str]], default: str | None = None):
        self._table = {k: (v if isinstance(v, str) else list(v)) for k, v in table.items()}
        self._default = default

    def chat(self, request: ChatRequest) -> ChatResponse:
        haystack = request.all_text().lower()
        for key, value in self._table.items():
            if key.lower() in haystack:
                if isinstance(value, str):
                    return ChatResponse(value)
                if not value:
                    raise TransportError(f"scripted responses for {key!r} exhausted")
                return ChatResponse(value.pop(0))
        if self._default is not None:
            return ChatResponse(self._default)
        raise TransportError("no scripted response matches the request")


class OracleSegmenter:
    """Fixture-backed segmenter: each known label maps to a stored mask
    and a request returns the union of its labels' masks."""

    def __init__(self, fixtures: Mapping[str, RasterMask], description: str = "Fixture-backed oracle segmenter; send a text prompt with detector labels."):
        self._fixtures = dict(fixtures)
        self._description = description

    def capabilities(self) -> SegmentorCapabilities:
        return SegmentorCapabilities(("text",), "binary", True, self._description)

    def segment(self, image: ImageData, meta_query: MetaQuery) -> ScoreMap:
        out = np.zeros((image.height, image.width), dtype=bool)
        for label in meta_query.labels:
            mask = self._fixtures.get(label)
            if mask is None:
                continue
            if mask.width != image.width or mask.height != image.height:
                raise ValidationError(DIMENSION_MISMATCH, f"fixture for {label!r} does not match the image")
            out |= mask.to_array()
        return check_score_dims(ScoreMap.from_array(out.astype(np.float32)), image)


class LocalCorpusRetrieval:
    """Directory-of-files retrieval: keyword "snow leopard" matches
    snow leopard.txt / snow_leopard.txt (snippet) and .png/.jpg (image).
    Results keep keyword order."""

    def __init__(self, root: str | Path):
        self._root = Path(root)

    def _candidates(self, keyword: str) -> list[str]:
        base = keyword.strip()
        names = [base, base.lower(), base.lower().replace(" ", "_")]
        seen: list[str] = []
        for n in names:
            if n and n not in seen:
                seen.append(n)
        return seen

    def retrieve(self, keywords: Sequence[str]) -> RetrievedContext | None:
        snippets: list[str] = []
        images: list[ImageData] = []
        for keyword in keywords:
            for name in self._candidates(keyword):
                txt = self._root / f"{name}.txt"
                if txt.is_file():
                    snippets.append(txt.read_text(encoding="utf-8"))
                    break
            for name in self._candidates(keyword):
                for ext in (".png", ".jpg", ".jpeg"):
                    img = self._root / f"{name}{ext}"
                    if img.is_file():
                        images.append(ImageData.from_png(img.read_bytes(), source_id=img.name))
                        break
                else:
                    continue
                break
        if not snippets and not images:
            return None
        return RetrievedContext(tuple(snippets), tuple(images))


class StubRetrieval:
    """Retrieval backend that never finds anything."""

    def retrieve(self, keywords: Sequence[str]) -> RetrievedContext | None:
        return None
