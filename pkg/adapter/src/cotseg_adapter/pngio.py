"""PNG helpers for the wire protocol: 8-bit RGB in, 16-bit grayscale
scores out (0 -> 0.0, 65535 -> 1.0), 1-bit fixture masks."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def read_rgb(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def read_mask(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8) > 0


def write_scores(values: np.ndarray) -> bytes:
    q = np.rint(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 65535).astype(np.uint16)
    h, w = q.shape
    im = Image.frombytes("I;16", (w, h), np.ascontiguousarray(q).tobytes())
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()
