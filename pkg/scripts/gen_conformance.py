#!/usr/bin/env python3
"""Regenerate the shared conformance fixture set under conformance/.

Expected masks are computed here from explicit coordinate rules, not by
calling either component, so the goldens stay an independent referee.
Deterministic: rerunning produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import math
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent / "conformance"

CAPABILITIES = {
    "input_types": ["text", "points", "box"],
    "score_semantics": "binary",
    "multi_object": True,
    "description": "Stub segmenter: unions per-label fixture masks for text prompts, fills discs around points and rectangles for boxes.",
}


def save_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def png16(bits: np.ndarray) -> bytes:
    q = (bits.astype(np.uint16)) * 65535
    h, w = q.shape
    im = Image.frombytes("I;16", (w, h), np.ascontiguousarray(q).tobytes())
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def png1(bits: np.ndarray) -> bytes:
    im = Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), "L").convert("1")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def png_rgb(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb.astype(np.uint8), "RGB").save(buf, format="PNG")
    return buf.getvalue()


def box_fill(w: int, h: int, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Pixel centers inside the closed denormalized box."""
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            if x0 * w <= c + 0.5 <= x1 * w and y0 * h <= r + 0.5 <= y1 * h:
                out[r, c] = True
    return out


def disc_fill(w: int, h: int, x: float, y: float) -> np.ndarray:
    radius = max(3, int(round(0.01 * min(w, h))))
    px = min(int(math.floor(x * w)), w - 1)
    py = min(int(math.floor(y * h)), h - 1)
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            if (c - px) ** 2 + (r - py) ** 2 <= radius ** 2:
                out[r, c] = True
    return out


def main() -> int:
    rng = np.random.default_rng(2024)
    img = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    (ROOT / "images").mkdir(parents=True, exist_ok=True)
    (ROOT / "images" / "img_8x8.png").write_bytes(png_rgb(img))

    leash = np.zeros((8, 8), dtype=bool)
    leash[1:3, 1:6] = True
    (ROOT / "fixture_masks").mkdir(parents=True, exist_ok=True)
    (ROOT / "fixture_masks" / "leash.png").write_bytes(png1(leash))

    save_json(ROOT / "capabilities.json", CAPABILITIES)

    (ROOT / "golden").mkdir(parents=True, exist_ok=True)
    cases = []

    def segment_case(name: str, meta_query: dict, expected_bits: np.ndarray) -> None:
        (ROOT / "golden" / f"{name}.png").write_bytes(png16(expected_bits))
        cases.append({
            "name": name,
            "image": "images/img_8x8.png",
            "meta_query": meta_query,
            "expect": {"status": 200, "scores": f"golden/{name}.png"},
        })

    def reject_case(name: str, meta_query, reason: str) -> None:
        cases.append({
            "name": name,
            "image": "images/img_8x8.png",
            "meta_query": meta_query,
            "expect": {"status": 422, "reason": reason},
        })

    segment_case(
        "seg_leash_label",
        {"input_type": "text", "prompt": "Please segment the leash.", "labels": ["leash"], "coords": None},
        leash,
    )
    segment_case(
        "seg_unknown_label",
        {"input_type": "text", "prompt": "Please segment the sofa.", "labels": ["sofa"], "coords": None},
        np.zeros((8, 8), dtype=bool),
    )
    segment_case(
        "seg_box_16px",
        {"input_type": "box", "prompt": "", "labels": [], "coords": [[0.25, 0.25], [0.75, 0.75]]},
        box_fill(8, 8, 0.25, 0.25, 0.75, 0.75),
    )
    segment_case(
        "seg_point_disc",
        {"input_type": "points", "prompt": "", "labels": [], "coords": [[0.5, 0.5]]},
        disc_fill(8, 8, 0.5, 0.5),
    )

    reject_case(
        "reject_unsupported_input_type",
        {"input_type": "scribble", "prompt": "", "labels": [], "coords": [[0.1, 0.1], [0.9, 0.9]]},
        "unsupported_input_type",
    )
    reject_case(
        "reject_missing_coords",
        {"input_type": "points", "prompt": "", "labels": [], "coords": []},
        "missing_coords",
    )
    reject_case(
        "reject_empty_prompt",
        {"input_type": "text", "prompt": "   ", "labels": [], "coords": None},
        "empty_prompt",
    )
    reject_case(
        "reject_unexpected_coords",
        {"input_type": "text", "prompt": "segment it", "labels": [], "coords": [[0.5, 0.5]]},
        "unexpected_coords",
    )
    reject_case(
        "reject_out_of_range",
        {"input_type": "points", "prompt": "", "labels": [], "coords": [[2.0, 0.5]]},
        "out_of_range",
    )
    reject_case(
        "reject_malformed_json",
        "this is not a json object",
        "malformed_json",
    )

    # The 16-pixel box fill is the pinned anchor; fail loudly if the rule drifts.
    assert int(box_fill(8, 8, 0.25, 0.25, 0.75, 0.75).sum()) == 16

    save_json(ROOT / "cases.json", cases)
    print(f"wrote {len(cases)} cases under {ROOT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
