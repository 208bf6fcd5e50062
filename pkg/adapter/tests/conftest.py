from __future__ import annotations

import json
from pathlib import Path

import pytest

CONFORMANCE = Path(__file__).resolve().parent.parent.parent / "conformance"


def load_cases() -> list[dict]:
    return json.loads((CONFORMANCE / "cases.json").read_text(encoding="utf-8"))


def golden_capabilities() -> dict:
    return json.loads((CONFORMANCE / "capabilities.json").read_text(encoding="utf-8"))


def case_image(case: dict) -> bytes:
    return (CONFORMANCE / case["image"]).read_bytes()


def case_meta_query_bytes(case: dict) -> bytes:
    mq = case["meta_query"]
    if isinstance(mq, str):  # deliberately malformed payload
        return mq.encode("utf-8")
    return json.dumps(mq, sort_keys=True, separators=(",", ":")).encode("utf-8")


def golden_scores(case: dict) -> bytes:
    return (CONFORMANCE / case["expect"]["scores"]).read_bytes()


@pytest.fixture(scope="session")
def stub_app():
    from cotseg_adapter import create_app

    return create_app(fixtures=CONFORMANCE / "fixture_masks")
