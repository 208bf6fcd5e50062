"""Pure mask arithmetic: thresholding, refinement combination, polygon
rasterization, IoU metrics, and overlay rendering.

The refinement combination treats all three masks as {0,1} integers and
keeps pixels where base + pos - neg > 0 (strict), so a pixel claimed by
both directives keeps its base value.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import ImageData, RasterMask, ScoreMap
from .errors import DEGENERATE_POLYGON, DIMENSION_MISMATCH, OUT_OF_RANGE, ValidationError


def _check_dims(a, b) -> None:
    if a.width != b.width or a.height != b.height:
        raise ValidationError(DIMENSION_MISMATCH, f"{a.width}x{a.height} vs {b.width}x{b.height}")


def binarize(scores: ScoreMap, threshold: float) -> RasterMask:
    """Bit is set iff score > threshold (strict)."""
    if not (0.0 < threshold < 1.0):
        raise ValidationError(OUT_OF_RANGE, "threshold must lie in (0,1)")
    return RasterMask.from_array(scores.to_array() > threshold)


def combine(base: RasterMask, pos: RasterMask, neg: RasterMask) -> RasterMask:
    """Apply positive/negative refinement masks: keep pixels where
    base + pos - neg > 0."""
    _check_dims(base, pos)
    _check_dims(base, neg)
    b = base.to_array().astype(np.int8)
    p = pos.to_array().astype(np.int8)
    n = neg.to_array().astype(np.int8)
    return RasterMask.from_array((b + p - n) > 0)


def iou(a: RasterMask, b: RasterMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    _check_dims(a, b)
    aa = a.to_array()
    bb = b.to_array()
    union = int(np.logical_or(aa, bb).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(aa, bb).sum()) / union


def intersection_union(a: RasterMask, b: RasterMask) -> tuple[int, int]:
    """Pixel counts feeding cumulative IoU."""
    _check_dims(a, b)
    aa = a.to_array()
    bb = b.to_array()
    return int(np.logical_and(aa, bb).sum()), int(np.logical_or(aa, bb).sum())


def aggregate(pairs: Sequence[tuple[RasterMask, RasterMask]]) -> tuple[float, float]:
    """Dataset metrics over (prediction, ground truth) pairs.

    Returns (gIoU, cIoU): the mean of per-pair IoU, and cumulative
    intersection over cumulative union (1.0 when the total union is 0).
    """
    if not pairs:
        raise ValidationError("empty_list", "aggregate needs at least one mask pair")
    ious = []
    total_i = 0
    total_u = 0
    for pred, gt in pairs:
        ious.append(iou(pred, gt))
        i, u = intersection_union(pred, gt)
        total_i += i
        total_u += u
    giou = sum(ious) / len(ious)
    ciou = 1.0 if total_u == 0 else total_i / total_u
    return giou, ciou


def _fill_polygon(out: np.ndarray, vertices: Sequence[tuple[float, float]], width: int, height: int) -> None:
    # Even-odd scanline fill sampled at pixel centers (x+0.5, y+0.5) in
    # pixel space; vertices arrive normalized and are scaled here.
    pts = [(float(x) * width, float(y) * height) for x, y in vertices]
    n = len(pts)
    for row in range(height):
        py = row + 0.5
        crossings = []
        for i in range(n):
            x1, y1 = pts[i]
            x2, y2 = pts[(i + 1) % n]
            if (y1 > py) != (y2 > py):
                crossings.append(x1 + (py - y1) * (x2 - x1) / (y2 - y1))
        crossings.sort()
        for k in range(0, len(crossings) - 1, 2):
            lo = max(0, math.ceil(crossings[k] - 0.5))
            hi = min(width, math.ceil(crossings[k + 1] - 0.5))
            if hi > lo:
                out[row, lo:hi] = True


def rasterize_polygons(polygons: Sequence[Sequence[Sequence[float]]], width: int, height: int) -> RasterMask:
    """Union of even-odd filled polygons with normalized vertices."""
    out = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        if len(poly) < 3:
            raise ValidationError(DEGENERATE_POLYGON, f"polygon has {len(poly)} vertices")
        for x, y in poly:
            if not (0.0 <= float(x) <= 1.0 and 0.0 <= float(y) <= 1.0):
                raise ValidationError(OUT_OF_RANGE, f"vertex ({x}, {y}) outside [0,1]")
        _fill_polygon(out, [(float(x), float(y)) for x, y in poly], width, height)
    return RasterMask.from_array(out)


def overlay(image: ImageData, mask: RasterMask, color: tuple[int, int, int] = (255, 0, 0), alpha: float = 0.5) -> ImageData:
    """Alpha-blend `color` over the masked pixels (round-half-up)."""
    if mask.width != image.width or mask.height != image.height:
        raise ValidationError(DIMENSION_MISMATCH, f"mask {mask.width}x{mask.height} vs image {image.width}x{image.height}")
    if not (0.0 <= alpha <= 1.0):
        raise ValidationError(OUT_OF_RANGE, "alpha must lie in [0,1]")
    img = image.to_array().astype(np.float64)
    tint = img * (1.0 - alpha) + np.asarray(color, dtype=np.float64) * alpha
    blended = np.where(mask.to_array()[:, :, None], np.floor(tint + 0.5), img)
    return ImageData.from_array(blended.astype(np.uint8), image.source_id)
