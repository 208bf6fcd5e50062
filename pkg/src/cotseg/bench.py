"""Dataset ingestion, batch evaluation, and report emission.

Dataset layout: <root>/<name>.jpg|png with a sidecar <root>/<name>.json
holding {"text": [queries...], "shapes": [{"points": [[x, y], ...]}]}.
Ground truth may instead be a 1-bit <root>/<name>.mask.png. Polygon
coordinates are sniffed: any value above 1.5 means pixel units and they
are normalized on load. One sample exists per (image, query), ordered by
(filename, query index), so reports are stable across runs, platforms,
and parallelism settings.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from PIL import Image

from . import maskops, pipeline
from .agents import AgentBundle
from .core import ImageData, PipelineConfig, RasterMask, SegQuery, canonical_json
from .errors import (
    DIMENSION_MISMATCH,
    EMPTY_DATASET,
    MALFORMED_JSON,
    MISSING_IMAGE,
    DatasetError,
)

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_path: Path
    query: str
    polygons: tuple[tuple[tuple[float, float], ...], ...] | None = None
    mask_path: Path | None = None

    def __post_init__(self):
        if (self.polygons is None) == (self.mask_path is None):
            raise DatasetError(MALFORMED_JSON, f"{self.sample_id}: exactly one ground-truth representation required")


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    iou: float
    intersection: int
    union: int
    rounds_used: int
    duration_seconds: float
    termination_reason: str

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "iou": self.iou,
            "intersection": self.intersection,
            "union": self.union,
            "rounds_used": self.rounds_used,
            "duration_seconds": self.duration_seconds,
            "termination_reason": self.termination_reason,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SampleResult":
        return cls(
            sample_id=d["sample_id"],
            iou=float(d["iou"]),
            intersection=int(d["intersection"]),
            union=int(d["union"]),
            rounds_used=int(d["rounds_used"]),
            duration_seconds=float(d["duration_seconds"]),
            termination_reason=d["termination_reason"],
        )


@dataclass(frozen=True)
class Report:
    label: str
    rows: tuple[SampleResult, ...]
    giou: float
    ciou: float
    mean_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "rows": [r.to_json_dict() for r in self.rows],
            "aggregate": {"giou": self.giou, "ciou": self.ciou, "mean_seconds": self.mean_seconds},
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "Report":
        agg = d["aggregate"]
        return cls(
            label=d.get("label", "cotseg"),
            rows=tuple(SampleResult.from_json_dict(r) for r in d["rows"]),
            giou=float(agg["giou"]),
            ciou=float(agg["ciou"]),
            mean_seconds=float(agg["mean_seconds"]),
        )


def _find_image(root: Path, stem: str) -> Path | None:
    for suffix in _IMAGE_SUFFIXES:
        candidate = root / f"{stem}{suffix}"
        if candidate.is_file() and not candidate.name.endswith(".mask.png"):
            return candidate
    return None


def _normalize_polygons(shapes, sample_id: str, width: int, height: int) -> tuple:
    polygons = []
    for shape in shapes:
        points = shape.get("points")
        if not isinstance(points, list) or len(points) < 3:
            raise DatasetError(MALFORMED_JSON, f"{sample_id}: polygon needs >= 3 vertices")
        coords = [(float(x), float(y)) for x, y in points]
        if any(abs(x) > 1.5 or abs(y) > 1.5 for x, y in coords):  # pixel units
            coords = [(x / width, y / height) for x, y in coords]
        coords = [(min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)) for x, y in coords]
        polygons.append(tuple(coords))
    return tuple(polygons)


def load_dataset(root: str | Path) -> list[Sample]:
    """Scan a dataset directory into samples, ordered by (filename,
    query index)."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(EMPTY_DATASET, f"{root} is not a directory")

    samples: list[Sample] = []
    sidecars = sorted(p for p in root.iterdir() if p.suffix == ".json")
    for sidecar in sidecars:
        stem = sidecar.stem
        image_path = _find_image(root, stem)
        if image_path is None:
            raise DatasetError(MISSING_IMAGE, f"no image found for {sidecar.name}")
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise DatasetError(MALFORMED_JSON, f"{sidecar.name}: {exc}") from exc
        queries = meta.get("text")
        if not isinstance(queries, list) or not queries:
            raise DatasetError(MALFORMED_JSON, f"{sidecar.name}: 'text' must be a non-empty list")

        mask_path = root / f"{stem}.mask.png"
        has_mask = mask_path.is_file()
        shapes = meta.get("shapes")
        if has_mask and shapes:
            raise DatasetError(MALFORMED_JSON, f"{sidecar.name}: both polygon and mask ground truth present")
        if not has_mask and not shapes:
            raise DatasetError(MALFORMED_JSON, f"{sidecar.name}: no ground truth present")

        with Image.open(image_path) as im:  # header read, no full decode
            width, height = im.size

        for i, query in enumerate(queries):
            sample_id = f"{stem}#{i}"
            if not isinstance(query, str) or not query.strip():
                raise DatasetError(MALFORMED_JSON, f"{sample_id}: empty query")
            samples.append(Sample(
                sample_id=sample_id,
                image_path=image_path,
                query=query,
                polygons=None if has_mask else _normalize_polygons(shapes, sample_id, width, height),
                mask_path=mask_path if has_mask else None,
            ))
    if not samples:
        raise DatasetError(EMPTY_DATASET, f"no samples under {root}")
    return samples


def ground_truth_mask(sample: Sample, width: int, height: int) -> RasterMask:
    """Rasterize or load the sample's ground truth at image resolution."""
    if sample.polygons is not None:
        return maskops.rasterize_polygons(sample.polygons, width, height)
    mask = RasterMask.from_png(sample.mask_path.read_bytes())
    if mask.width != width or mask.height != height:
        raise DatasetError(DIMENSION_MISMATCH, f"{sample.sample_id}: ground-truth mask is {mask.width}x{mask.height}, image is {width}x{height}")
    return mask


AgentSource = AgentBundle | Callable[[Sample], AgentBundle]


def _bundle_for(agents: AgentSource, sample: Sample) -> AgentBundle:
    if isinstance(agents, AgentBundle):
        return agents
    return agents(sample)


def _evaluate_one(sample: Sample, cfg: PipelineConfig, agents: AgentSource) -> SampleResult:
    try:
        image = ImageData.from_png(sample.image_path.read_bytes(), source_id=sample.image_path.name)
        gt = ground_truth_mask(sample, image.width, image.height)
        record = pipeline.run(image, SegQuery(sample.query), cfg, _bundle_for(agents, sample))
        i, u = maskops.intersection_union(record.final_mask, gt)
        return SampleResult(
            sample_id=sample.sample_id,
            iou=maskops.iou(record.final_mask, gt),
            intersection=i,
            union=u,
            rounds_used=record.refine_rounds_used,
            duration_seconds=record.total_seconds,
            termination_reason=record.termination_reason,
        )
    except Exception as exc:  # a bad sample must never abort the batch
        log.warning("sample %s failed: %s", sample.sample_id, exc)
        return SampleResult(sample.sample_id, 0.0, 0, 0, 0, 0.0, pipeline.TERM_FAILURE)


def evaluate(
    samples: Sequence[Sample],
    cfg: PipelineConfig,
    agents: AgentSource,
    parallelism: int = 1,
    label: str = "cotseg",
) -> Report:
    """Run the pipeline over every sample and aggregate gIoU/cIoU.

    `agents` is one bundle shared by all samples or a factory called per
    sample (required for cassette replay, where each run needs its own
    cassette). Results are reduced in sample order, so the aggregate is
    independent of `parallelism`.
    """
    if not samples:
        raise DatasetError(EMPTY_DATASET, "no samples to evaluate")
    if parallelism < 1:
        raise DatasetError(EMPTY_DATASET, "parallelism must be >= 1")

    if parallelism == 1:
        rows = [_evaluate_one(s, cfg, agents) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(lambda s: _evaluate_one(s, cfg, agents), samples))

    giou = sum(r.iou for r in rows) / len(rows)
    total_u = sum(r.union for r in rows)
    ciou = 1.0 if total_u == 0 else sum(r.intersection for r in rows) / total_u
    mean_seconds = sum(r.duration_seconds for r in rows) / len(rows)
    return Report(label=label, rows=tuple(rows), giou=giou, ciou=ciou, mean_seconds=mean_seconds)


def _format_ratio(value: float, percent: bool) -> str:
    return f"{value * 100.0:.1f}" if percent else f"{value:.3f}"


def render_markdown(report: Report, percent: bool = True) -> str:
    lines = [
        "| Method | gIoU | cIoU |",
        "| --- | --- | --- |",
        f"| {report.label} | {_format_ratio(report.giou, percent)} | {_format_ratio(report.ciou, percent)} |",
        "",
        f"Mean seconds per image-query pair: {report.mean_seconds:.3f}",
        "",
        "| Sample | IoU | Rounds | Seconds | Termination |",
        "| --- | --- | --- | --- | --- |",
    ]
    for r in report.rows:
        lines.append(
            f"| {r.sample_id} | {_format_ratio(r.iou, percent)} | {r.rounds_used} "
            f"| {r.duration_seconds:.3f} | {r.termination_reason} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(report: Report, path: str | Path, fmt: str = "json", percent: bool = True) -> None:
    """Write the report as canonical JSON or a markdown table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(canonical_json(report.to_json_dict()), encoding="utf-8")
    elif fmt in ("markdown-table", "markdown", "md"):
        path.write_text(render_markdown(report, percent), encoding="utf-8")
    else:
        raise DatasetError(MALFORMED_JSON, f"unknown report format {fmt!r}")


def load_report(path: str | Path) -> Report:
    return Report.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
