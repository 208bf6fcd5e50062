"""PNG codecs and raster drawing for images, masks, and score maps.

Score maps travel as 16-bit grayscale PNG: pixel value k encodes the
score k/65535, so 0 maps to 0.0 and 65535 to 1.0. The mapping is a
bijection on that grid (round-trips exactly for every k). Masks are
1-bit PNG; images are 8-bit RGB PNG, both lossless.
"""

from __future__ import annotations

import io
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from .errors import INVALID_RESPONSE_SHAPE, ValidationError

SCORE_SCALE = 65535


def image_to_png(rgb: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_image(data: bytes) -> np.ndarray:
    """Decode PNG bytes to an (H, W, 3) uint8 array."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def mask_to_png(bits: np.ndarray) -> bytes:
    """Encode an (H, W) boolean array as a 1-bit PNG."""
    gray = Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), "L")
    buf = io.BytesIO()
    gray.convert("1").save(buf, format="PNG")
    return buf.getvalue()


def png_to_mask(data: bytes) -> np.ndarray:
    """Decode a PNG to an (H, W) boolean array (any nonzero pixel is set)."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8) > 0


def scores_to_png16(values: np.ndarray) -> bytes:
    """Encode an (H, W) float array in [0, 1] as 16-bit grayscale PNG."""
    q = np.rint(np.asarray(values, dtype=np.float64) * SCORE_SCALE).astype(np.uint16)
    h, w = q.shape
    im = Image.frombytes("I;16", (w, h), np.ascontiguousarray(q).tobytes())
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def png16_to_scores(data: bytes) -> np.ndarray:
    """Decode a 16-bit grayscale PNG to an (H, W) float32 array in [0, 1]."""
    with Image.open(io.BytesIO(data)) as im:
        if im.mode not in ("I;16", "I;16B", "I"):
            raise ValidationError(INVALID_RESPONSE_SHAPE, f"expected 16-bit grayscale PNG, got mode {im.mode}")
        raw = np.asarray(im, dtype=np.uint32)
    return (raw.astype(np.float64) / SCORE_SCALE).astype(np.float32)


RED = (255, 0, 0)


def disc_radius(width: int, height: int) -> int:
    """Annotation disc radius: max(3px, 1% of the smaller dimension)."""
    return max(3, int(round(0.01 * min(width, height))))


def draw_points(rgb: np.ndarray, centers: Sequence[tuple[int, int]], radius: int, color=RED) -> np.ndarray:
    im = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB")
    d = ImageDraw.Draw(im)
    for cx, cy in centers:
        d.ellipse([cx - radius, cy - radius, cx + radius, cy + radius], fill=color)
    return np.asarray(im, dtype=np.uint8)


def draw_box(rgb: np.ndarray, corner_min: tuple[int, int], corner_max: tuple[int, int], color=RED) -> np.ndarray:
    im = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB")
    d = ImageDraw.Draw(im)
    d.rectangle([corner_min, corner_max], outline=color, width=2)
    return np.asarray(im, dtype=np.uint8)


def draw_polyline(rgb: np.ndarray, points: Sequence[tuple[int, int]], color=RED) -> np.ndarray:
    im = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB")
    d = ImageDraw.Draw(im)
    d.line([tuple(p) for p in points], fill=color, width=2)
    return np.asarray(im, dtype=np.uint8)


def fill_polygon_tint(rgb: np.ndarray, points: Sequence[tuple[int, int]], color=RED, alpha: float = 0.4) -> np.ndarray:
    """Blend `color` at `alpha` over the polygon interior."""
    h, w = rgb.shape[:2]
    stencil = Image.new("L", (w, h), 0)
    ImageDraw.Draw(stencil).polygon([tuple(p) for p in points], fill=255)
    inside = np.asarray(stencil, dtype=np.uint8) > 0
    out = np.asarray(rgb, dtype=np.float64).copy()
    blend = out * (1.0 - alpha) + np.asarray(color, dtype=np.float64) * alpha
    out[inside] = blend[inside]
    return np.floor(out + 0.5).astype(np.uint8)
