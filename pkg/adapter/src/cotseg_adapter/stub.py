"""Deterministic stub backend.

Text prompts return the union of per-label fixture masks from the
fixtures directory (unknown labels contribute nothing); point prompts
fill red-pencil-sized discs (radius max(3px, 1% of the smaller
dimension)) around each coordinate; box prompts fill every pixel whose
center lies inside the denormalized closed box. Responses are pure
functions of (image dimensions, meta-query, fixture directory).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from . import pngio

CAPABILITIES = {
    "input_types": ["text", "points", "box"],
    "score_semantics": "binary",
    "multi_object": True,
    "description": "Stub segmenter: unions per-label fixture masks for text prompts, fills discs around points and rectangles for boxes.",
}


def _denormalize(x: float, y: float, width: int, height: int) -> tuple[int, int]:
    px = min(int(math.floor(x * width)), width - 1)
    py = min(int(math.floor(y * height)), height - 1)
    return max(px, 0), max(py, 0)


class StubBackend:
    def __init__(self, fixtures_dir: str | Path | None = None):
        self._fixtures = Path(fixtures_dir) if fixtures_dir else None

    def capabilities(self) -> dict:
        return dict(CAPABILITIES)

    def _label_mask(self, label: str, width: int, height: int) -> np.ndarray | None:
        if self._fixtures is None:
            return None
        for name in (label, label.lower(), label.lower().replace(" ", "_")):
            path = self._fixtures / f"{name}.png"
            if path.is_file():
                mask = pngio.read_mask(path.read_bytes())
                if mask.shape != (height, width):
                    im = Image.fromarray(mask.astype(np.uint8) * 255, "L")
                    mask = np.asarray(im.resize((width, height), Image.NEAREST), dtype=np.uint8) > 0
                return mask
        return None

    def segment(self, image: np.ndarray, meta_query: dict) -> np.ndarray:
        height, width = image.shape[:2]
        out = np.zeros((height, width), dtype=bool)
        input_type = meta_query["input_type"]

        if input_type == "text":
            for label in meta_query.get("labels") or ():
                mask = self._label_mask(str(label), width, height)
                if mask is not None:
                    out |= mask
            return out.astype(np.float64)

        coords = meta_query.get("coords") or []
        if input_type == "points":
            radius = max(3, int(round(0.01 * min(width, height))))
            cols, rows = np.meshgrid(np.arange(width), np.arange(height))
            for x, y in coords:
                px, py = _denormalize(float(x), float(y), width, height)
                out |= (cols - px) ** 2 + (rows - py) ** 2 <= radius ** 2
            return out.astype(np.float64)

        # box: pixel centers inside the closed denormalized box
        (x0, y0), (x1, y1) = coords
        x0, x1 = sorted((float(x0), float(x1)))
        y0, y1 = sorted((float(y0), float(y1)))
        centers_x = np.arange(width) + 0.5
        centers_y = np.arange(height) + 0.5
        inside_x = (centers_x >= x0 * width) & (centers_x <= x1 * width)
        inside_y = (centers_y >= y0 * height) & (centers_y <= y1 * height)
        out = inside_y[:, None] & inside_x[None, :]
        return out.astype(np.float64)
