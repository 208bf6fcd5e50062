"""Wire-level meta-query validation.

Returns the 422 reason code for a bad request, or None to accept. The
code vocabulary is shared with the client side and frozen by the
conformance fixture set: malformed_json, unsupported_input_type,
missing_coords, unexpected_coords, out_of_range, empty_prompt.
"""

from __future__ import annotations

MALFORMED_JSON = "malformed_json"
UNSUPPORTED_INPUT_TYPE = "unsupported_input_type"
MISSING_COORDS = "missing_coords"
UNEXPECTED_COORDS = "unexpected_coords"
OUT_OF_RANGE = "out_of_range"
EMPTY_PROMPT = "empty_prompt"

_MIN_ARITY = {"points": 1, "box": 2, "scribble": 2}


def _coords_ok(coords) -> bool:
    if not isinstance(coords, list):
        return False
    for pair in coords:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            return False
        if not all(isinstance(v, (int, float)) for v in pair):
            return False
    return True


def check_meta_query(meta_query, input_types: list[str]) -> str | None:
    if not isinstance(meta_query, dict):
        return MALFORMED_JSON
    input_type = meta_query.get("input_type")
    if not isinstance(input_type, str):
        return MALFORMED_JSON
    if input_type not in input_types:
        return UNSUPPORTED_INPUT_TYPE

    coords = meta_query.get("coords")
    if input_type == "text":
        if coords is not None:
            return UNEXPECTED_COORDS
        prompt = meta_query.get("prompt")
        if not isinstance(prompt, str) or not prompt.strip():
            return EMPTY_PROMPT
        return None

    if coords is not None and not _coords_ok(coords):
        return MALFORMED_JSON
    needed = _MIN_ARITY.get(input_type, 1)
    if coords is None or len(coords) < needed or (input_type == "box" and len(coords) != 2):
        return MISSING_COORDS
    for x, y in coords:
        if not (0.0 <= float(x) <= 1.0 and 0.0 <= float(y) <= 1.0):
            return OUT_OF_RANGE
    return None
