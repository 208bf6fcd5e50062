"""Domain types, validation, and coordinate conventions.

Coordinates are normalized floats in [0, 1] with x rightward, y downward,
and the origin at the top-left corner; pixel buffers are row-major. All
types are immutable after construction and safe to share across tasks.

The ``to_json_dict`` / ``from_json_dict`` encodings of MetaQuery,
SegmentorCapabilities, EvalVerdict, and RunRecord are the wire schema
used by every transport in the package (lowercase snake_case keys).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import imaging
from .errors import (
    DIMENSION_MISMATCH,
    EMPTY_PROMPT,
    MISSING_COORDS,
    OUT_OF_RANGE,
    UNEXPECTED_COORDS,
    UNSUPPORTED_INPUT_TYPE,
    ValidationError,
)

INPUT_TYPES = ("text", "points", "box", "scribble")
CONTROL_KINDS = ("points", "box", "scribble", "highlight")
SCORE_SEMANTICS = ("binary", "soft")
TERMINATION_REASONS = ("judged_correct", "max_rounds", "agent_failure_fallback")

# Minimum coordinate count per control/meta-query kind; box is exact.
_MIN_ARITY = {"points": 1, "box": 2, "scribble": 2, "highlight": 1}


def canonical_json(data: Any) -> str:
    """Serialize with sorted keys and no whitespace: the digest/wire form."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(cond: bool, reason: str, detail: str = "") -> None:
    if not cond:
        raise ValidationError(reason, detail)


def _as_coord_tuple(coords: Iterable[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    out = []
    for pair in coords:
        x, y = pair
        out.append((float(x), float(y)))
    return tuple(out)


def _check_unit_range(coords: Iterable[tuple[float, float]]) -> None:
    for x, y in coords:
        _require(0.0 <= x <= 1.0 and 0.0 <= y <= 1.0, OUT_OF_RANGE, f"coordinate ({x}, {y}) outside [0,1]")


@dataclass(frozen=True)
class ImageData:
    """Row-major RGB8 image buffer."""

    width: int
    height: int
    pixels: bytes
    source_id: str = ""

    def __post_init__(self):
        _require(self.width >= 1 and self.height >= 1, DIMENSION_MISMATCH, "image dimensions must be >= 1")
        object.__setattr__(self, "pixels", bytes(self.pixels))
        _require(
            len(self.pixels) == self.width * self.height * 3,
            DIMENSION_MISMATCH,
            f"pixel buffer has {len(self.pixels)} bytes, expected {self.width * self.height * 3}",
        )

    @classmethod
    def from_array(cls, rgb: np.ndarray, source_id: str = "") -> "ImageData":
        arr = np.ascontiguousarray(rgb, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(DIMENSION_MISMATCH, f"expected (H, W, 3) array, got {arr.shape}")
        return cls(arr.shape[1], arr.shape[0], arr.tobytes(), source_id)

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)
        arr.flags.writeable = False
        return arr

    def to_png(self) -> bytes:
        return imaging.image_to_png(self.to_array())

    @classmethod
    def from_png(cls, data: bytes, source_id: str = "") -> "ImageData":
        return cls.from_array(imaging.png_to_image(data), source_id)


@dataclass(frozen=True)
class RasterMask:
    """Row-major binary mask; one byte per pixel, values 0 or 1."""

    width: int
    height: int
    bits: bytes

    def __post_init__(self):
        _require(self.width >= 1 and self.height >= 1, DIMENSION_MISMATCH, "mask dimensions must be >= 1")
        object.__setattr__(self, "bits", bytes(self.bits))
        _require(
            len(self.bits) == self.width * self.height,
            DIMENSION_MISMATCH,
            f"bit buffer has {len(self.bits)} bytes, expected {self.width * self.height}",
        )
        arr = np.frombuffer(self.bits, dtype=np.uint8)
        _require(arr.size == 0 or int(arr.max()) <= 1, DIMENSION_MISMATCH, "mask bytes must be 0 or 1")

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "RasterMask":
        arr = np.ascontiguousarray(bits)
        if arr.ndim != 2:
            raise ValidationError(DIMENSION_MISMATCH, f"expected (H, W) array, got {arr.shape}")
        return cls(arr.shape[1], arr.shape[0], (arr != 0).astype(np.uint8).tobytes())

    @classmethod
    def empty(cls, width: int, height: int) -> "RasterMask":
        return cls(width, height, bytes(width * height))

    @classmethod
    def full(cls, width: int, height: int) -> "RasterMask":
        return cls(width, height, b"\x01" * (width * height))

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.bits, dtype=np.uint8).reshape(self.height, self.width) != 0
        arr.flags.writeable = False
        return arr

    @property
    def count(self) -> int:
        return int(np.frombuffer(self.bits, dtype=np.uint8).sum())

    def to_png(self) -> bytes:
        return imaging.mask_to_png(self.to_array())

    @classmethod
    def from_png(cls, data: bytes) -> "RasterMask":
        return cls.from_array(imaging.png_to_mask(data))


@dataclass(frozen=True)
class ScoreMap:
    """Row-major per-pixel prediction scores in [0, 1], stored as float32."""

    width: int
    height: int
    values: bytes  # little-endian float32

    def __post_init__(self):
        _require(self.width >= 1 and self.height >= 1, DIMENSION_MISMATCH, "score map dimensions must be >= 1")
        object.__setattr__(self, "values", bytes(self.values))
        _require(
            len(self.values) == self.width * self.height * 4,
            DIMENSION_MISMATCH,
            f"value buffer has {len(self.values)} bytes, expected {self.width * self.height * 4}",
        )
        arr = np.frombuffer(self.values, dtype="<f4")
        _require(bool(np.isfinite(arr).all()), OUT_OF_RANGE, "score values must be finite")
        if arr.size:
            _require(float(arr.min()) >= 0.0 and float(arr.max()) <= 1.0, OUT_OF_RANGE, "score values must lie in [0,1]")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ScoreMap":
        arr = np.ascontiguousarray(values, dtype="<f4")
        if arr.ndim != 2:
            raise ValidationError(DIMENSION_MISMATCH, f"expected (H, W) array, got {arr.shape}")
        return cls(arr.shape[1], arr.shape[0], arr.tobytes())

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.values, dtype="<f4").reshape(self.height, self.width)
        arr.flags.writeable = False
        return arr

    def to_png16(self) -> bytes:
        return imaging.scores_to_png16(self.to_array())

    @classmethod
    def from_png16(cls, data: bytes) -> "ScoreMap":
        return cls.from_array(imaging.png16_to_scores(data))


@dataclass(frozen=True)
class ControlAnnotation:
    """Visual prompt: points, a box, a scribble, or a highlighted region.

    Box corners are canonicalized to (min-corner, max-corner) so corner
    order never carries meaning.
    """

    kind: str
    coords: tuple[tuple[float, float], ...]
    rendered: ImageData | None = None

    def __post_init__(self):
        _require(self.kind in CONTROL_KINDS, UNSUPPORTED_INPUT_TYPE, f"unknown control kind {self.kind!r}")
        object.__setattr__(self, "coords", _as_coord_tuple(self.coords))
        n = len(self.coords)
        _require(n >= _MIN_ARITY[self.kind], MISSING_COORDS, f"{self.kind} needs >= {_MIN_ARITY[self.kind]} coords, got {n}")
        if self.kind == "box":
            _require(n == 2, MISSING_COORDS, f"box needs exactly 2 corner points, got {n}")
            (x0, y0), (x1, y1) = self.coords
            object.__setattr__(self, "coords", ((min(x0, x1), min(y0, y1)), (max(x0, x1), max(y0, y1))))
        _check_unit_range(self.coords)


@dataclass(frozen=True)
class SegQuery:
    """User request: free text, a visual control, or both."""

    text: str = ""
    control: ControlAnnotation | None = None

    def __post_init__(self):
        _require(bool(self.text.strip()) or self.control is not None, EMPTY_PROMPT, "query needs text or a control annotation")


@dataclass(frozen=True)
class SegmentorCapabilities:
    """Machine-readable descriptor of what a segmentation backend accepts."""

    input_types: tuple[str, ...]
    score_semantics: str
    multi_object: bool
    description: str

    def __post_init__(self):
        object.__setattr__(self, "input_types", tuple(self.input_types))
        _require(len(self.input_types) > 0, UNSUPPORTED_INPUT_TYPE, "input_types must be non-empty")
        for t in self.input_types:
            _require(t in INPUT_TYPES, UNSUPPORTED_INPUT_TYPE, f"unknown input type {t!r}")
        _require(self.score_semantics in SCORE_SEMANTICS, OUT_OF_RANGE, f"unknown score semantics {self.score_semantics!r}")
        _require(bool(self.description.strip()), EMPTY_PROMPT, "description must be non-empty")

    def to_json_dict(self) -> dict:
        return {
            "input_types": list(self.input_types),
            "score_semantics": self.score_semantics,
            "multi_object": self.multi_object,
            "description": self.description,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SegmentorCapabilities":
        return cls(
            input_types=tuple(d["input_types"]),
            score_semantics=d["score_semantics"],
            multi_object=bool(d["multi_object"]),
            description=d["description"],
        )


@dataclass(frozen=True)
class MetaQuery:
    """Structured instruction handed to the segmenter.

    Capability- and arity-dependent rules live in validate_meta_query so
    that wire-decoded instances can be inspected before rejection.
    """

    input_type: str
    prompt: str = ""
    labels: tuple[str, ...] = ()
    coords: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        _require(self.input_type in INPUT_TYPES, UNSUPPORTED_INPUT_TYPE, f"unknown input type {self.input_type!r}")
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if self.coords is not None:
            object.__setattr__(self, "coords", _as_coord_tuple(self.coords))

    def to_json_dict(self) -> dict:
        return {
            "input_type": self.input_type,
            "prompt": self.prompt,
            "labels": list(self.labels),
            "coords": [list(c) for c in self.coords] if self.coords is not None else None,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "MetaQuery":
        coords = d.get("coords")
        return cls(
            input_type=d["input_type"],
            prompt=d.get("prompt", ""),
            labels=tuple(d.get("labels") or ()),
            coords=tuple((float(c[0]), float(c[1])) for c in coords) if coords is not None else None,
        )


@dataclass(frozen=True)
class CoTTrace:
    """Ordered question/answer pairs plus the closing summary."""

    steps: tuple[tuple[str, str], ...] = ()
    summary: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((str(q), str(a)) for q, a in self.steps))
        _require(not self.steps or bool(self.summary.strip()), EMPTY_PROMPT, "summary must be non-empty when steps exist")

    def truncated(self, max_steps: int) -> "CoTTrace":
        if len(self.steps) <= max_steps:
            return self
        return CoTTrace(self.steps[:max_steps], self.summary)

    def to_json_dict(self) -> dict:
        return {"steps": [[q, a] for q, a in self.steps], "summary": self.summary}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "CoTTrace":
        return cls(tuple((q, a) for q, a in d.get("steps") or ()), d.get("summary", ""))


@dataclass(frozen=True)
class EvalVerdict:
    """Evaluator output: correct=True means no refinement is needed."""

    reasoning: str
    correct: bool
    positive: MetaQuery | None = None
    negative: MetaQuery | None = None

    def __post_init__(self):
        if self.correct:
            _require(self.positive is None and self.negative is None, "inconsistent_verdict",
                     "correct verdict must carry no directives")
        else:
            _require(self.positive is not None or self.negative is not None, "inconsistent_verdict",
                     "incorrect verdict needs at least one directive")

    def to_json_dict(self) -> dict:
        return {
            "reasoning": self.reasoning,
            "correct": self.correct,
            "positive": self.positive.to_json_dict() if self.positive else None,
            "negative": self.negative.to_json_dict() if self.negative else None,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "EvalVerdict":
        pos = d.get("positive")
        neg = d.get("negative")
        return cls(
            reasoning=d.get("reasoning", ""),
            correct=bool(d["correct"]),
            positive=MetaQuery.from_json_dict(pos) if pos else None,
            negative=MetaQuery.from_json_dict(neg) if neg else None,
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Run-shaping knobs.

    cot_length_mode is "variational" (the model picks the depth, capped by
    max_cot_rounds) or "fixed:<n>" (the prompt demands exactly n pairs).
    max_cot_rounds=0 disables chain-of-thought entirely.
    """

    max_cot_rounds: int = 8
    cot_length_mode: str = "variational"
    max_refine_rounds: int = 2
    binarize_threshold: float = 0.5
    retrieval_enabled: bool = False
    revert_enabled: bool = True

    def __post_init__(self):
        _require(self.max_cot_rounds >= 0, OUT_OF_RANGE, "max_cot_rounds must be >= 0")
        _require(self.max_refine_rounds >= 0, OUT_OF_RANGE, "max_refine_rounds must be >= 0")
        _require(0.0 < self.binarize_threshold < 1.0, OUT_OF_RANGE, "binarize_threshold must lie in (0,1)")
        n = self.fixed_cot_length
        if self.cot_length_mode != "variational":
            _require(n is not None and n >= 0, OUT_OF_RANGE, f"bad cot_length_mode {self.cot_length_mode!r}")
            _require(n <= self.max_cot_rounds, OUT_OF_RANGE, "fixed CoT length must not exceed max_cot_rounds")

    @property
    def fixed_cot_length(self) -> int | None:
        if self.cot_length_mode == "variational":
            return None
        kind, _, n = self.cot_length_mode.partition(":")
        if kind != "fixed" or not n.isdigit():
            return None
        return int(n)

    def to_json_dict(self) -> dict:
        return {
            "max_cot_rounds": self.max_cot_rounds,
            "cot_length_mode": self.cot_length_mode,
            "max_refine_rounds": self.max_refine_rounds,
            "binarize_threshold": self.binarize_threshold,
            "retrieval_enabled": self.retrieval_enabled,
            "revert_enabled": self.revert_enabled,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "PipelineConfig":
        return cls(
            max_cot_rounds=int(d["max_cot_rounds"]),
            cot_length_mode=d["cot_length_mode"],
            max_refine_rounds=int(d["max_refine_rounds"]),
            binarize_threshold=float(d["binarize_threshold"]),
            retrieval_enabled=bool(d["retrieval_enabled"]),
            revert_enabled=bool(d["revert_enabled"]),
        )


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


@dataclass(frozen=True)
class RoundRecord:
    """One pipeline stage: round 0 is the first-turn segmentation, later
    indices are refinement rounds."""

    round_index: int
    meta_queries: tuple[MetaQuery, ...] = ()
    score_maps: tuple[ScoreMap, ...] = ()
    masks: tuple[RasterMask, ...] = ()
    verdict: EvalVerdict | None = None
    revert_decision: str | None = None  # "previous" | "refined" | None
    duration_seconds: float = 0.0

    def to_json_dict(self, include_timings: bool = True) -> dict:
        d = {
            "round_index": self.round_index,
            "meta_queries": [m.to_json_dict() for m in self.meta_queries],
            "score_maps": [_b64(s.to_png16()) for s in self.score_maps],
            "masks": [_b64(m.to_png()) for m in self.masks],
            "verdict": self.verdict.to_json_dict() if self.verdict else None,
            "revert_decision": self.revert_decision,
        }
        if include_timings:
            d["duration_seconds"] = self.duration_seconds
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "RoundRecord":
        return cls(
            round_index=int(d["round_index"]),
            meta_queries=tuple(MetaQuery.from_json_dict(m) for m in d.get("meta_queries") or ()),
            score_maps=tuple(ScoreMap.from_png16(_unb64(s)) for s in d.get("score_maps") or ()),
            masks=tuple(RasterMask.from_png(_unb64(m)) for m in d.get("masks") or ()),
            verdict=EvalVerdict.from_json_dict(d["verdict"]) if d.get("verdict") else None,
            revert_decision=d.get("revert_decision"),
            duration_seconds=float(d.get("duration_seconds", 0.0)),
        )


@dataclass(frozen=True)
class RunRecord:
    """Full account of one pipeline run."""

    config: PipelineConfig
    query: str
    source_id: str
    width: int
    height: int
    trace: CoTTrace
    rounds: tuple[RoundRecord, ...]
    final_mask: RasterMask
    termination_reason: str
    flags: tuple[str, ...] = ()
    total_seconds: float = 0.0

    def __post_init__(self):
        _require(self.termination_reason in TERMINATION_REASONS, OUT_OF_RANGE,
                 f"unknown termination reason {self.termination_reason!r}")
        _require(len(self.rounds) <= 1 + self.config.max_refine_rounds, OUT_OF_RANGE,
                 "round count exceeds 1 + max_refine_rounds")
        _require(self.final_mask.width == self.width and self.final_mask.height == self.height,
                 DIMENSION_MISMATCH, "final mask does not match run dimensions")

    @property
    def refine_rounds_used(self) -> int:
        return sum(1 for r in self.rounds if r.round_index >= 1 and r.masks)

    def to_json_dict(self, include_timings: bool = True) -> dict:
        d = {
            "config": self.config.to_json_dict(),
            "query": self.query,
            "source_id": self.source_id,
            "width": self.width,
            "height": self.height,
            "trace": self.trace.to_json_dict(),
            "rounds": [r.to_json_dict(include_timings) for r in self.rounds],
            "final_mask": _b64(self.final_mask.to_png()),
            "termination_reason": self.termination_reason,
            "flags": list(self.flags),
        }
        if include_timings:
            d["total_seconds"] = self.total_seconds
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return canonical_json(self.to_json_dict(include_timings))

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "RunRecord":
        return cls(
            config=PipelineConfig.from_json_dict(d["config"]),
            query=d.get("query", ""),
            source_id=d.get("source_id", ""),
            width=int(d["width"]),
            height=int(d["height"]),
            trace=CoTTrace.from_json_dict(d["trace"]),
            rounds=tuple(RoundRecord.from_json_dict(r) for r in d.get("rounds") or ()),
            final_mask=RasterMask.from_png(_unb64(d["final_mask"])),
            termination_reason=d["termination_reason"],
            flags=tuple(d.get("flags") or ()),
            total_seconds=float(d.get("total_seconds", 0.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_meta_query; falsy when rejected."""

    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_meta_query(mq: MetaQuery, caps: SegmentorCapabilities) -> ValidationResult:
    """Check a meta-query against a segmenter's declared capabilities.

    Rejections carry one of: unsupported_input_type, missing_coords,
    unexpected_coords, out_of_range, empty_prompt.
    """
    if mq.input_type not in caps.input_types:
        return ValidationResult(False, UNSUPPORTED_INPUT_TYPE)
    if mq.input_type == "text":
        if mq.coords is not None:
            return ValidationResult(False, UNEXPECTED_COORDS)
        if not mq.prompt.strip():
            return ValidationResult(False, EMPTY_PROMPT)
        return ValidationResult(True)
    coords = mq.coords or ()
    needed = _MIN_ARITY[mq.input_type]
    if len(coords) < needed or (mq.input_type == "box" and len(coords) != 2):
        return ValidationResult(False, MISSING_COORDS)
    for x, y in coords:
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return ValidationResult(False, OUT_OF_RANGE)
    return ValidationResult(True)


def denormalize(coords: Sequence[Sequence[float]], width: int, height: int) -> list[tuple[int, int]]:
    """Map normalized (x, y) pairs onto the pixel grid.

    pixel = floor(coord * dimension), clamped into [0, dimension - 1];
    monotone per axis over [0, 1].
    """
    out = []
    for pair in coords:
        x, y = float(pair[0]), float(pair[1])
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValidationError(OUT_OF_RANGE, f"coordinate ({x}, {y}) outside [0,1]")
        px = min(int(math.floor(x * width)), width - 1)
        py = min(int(math.floor(y * height)), height - 1)
        out.append((max(px, 0), max(py, 0)))
    return out
