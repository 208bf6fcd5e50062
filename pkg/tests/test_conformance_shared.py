"""The shared golden fixture set, consumed from the client side.

Every 422 reason code in the set must be reproduced by this package's
own validation (the sidecar enforces the same rules server-side), and
every accepted request must validate cleanly.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from cotseg.core import MetaQuery, SegmentorCapabilities, validate_meta_query

CONFORMANCE = Path(__file__).resolve().parent.parent / "conformance"

pytestmark = pytest.mark.skipif(not CONFORMANCE.is_dir(), reason="shared conformance fixtures not present")


def load_cases() -> list[dict]:
    return json.loads((CONFORMANCE / "cases.json").read_text(encoding="utf-8"))


def golden_caps() -> SegmentorCapabilities:
    return SegmentorCapabilities.from_json_dict(
        json.loads((CONFORMANCE / "capabilities.json").read_text(encoding="utf-8"))
    )


def test_accepted_cases_validate():
    caps = golden_caps()
    for case in load_cases():
        if case["expect"]["status"] != 200:
            continue
        mq = MetaQuery.from_json_dict(case["meta_query"])
        assert validate_meta_query(mq, caps).ok, case["name"]


def test_rejected_cases_reproduce_reason_codes():
    caps = golden_caps()
    seen = set()
    for case in load_cases():
        if case["expect"]["status"] != 422:
            continue
        reason = case["expect"]["reason"]
        seen.add(reason)
        raw = case["meta_query"]
        if not isinstance(raw, dict):
            # wire-level malformed payload: decoding itself must fail
            with pytest.raises(Exception):
                MetaQuery.from_json_dict(raw)
            continue
        result = validate_meta_query(MetaQuery.from_json_dict(raw), caps)
        assert not result.ok and result.reason == reason, case["name"]
    assert {"unsupported_input_type", "missing_coords", "empty_prompt",
            "unexpected_coords", "out_of_range"} <= seen
