"""Stub mode against the shared golden fixture set (in-process)."""

from __future__ import annotations

import re

import pytest
from fastapi.testclient import TestClient

from conftest import case_image, case_meta_query_bytes, golden_capabilities, golden_scores, load_cases

CASES = load_cases()


def split_scores_part(body: bytes, content_type: str) -> bytes:
    boundary = re.search(r'boundary="?([^";]+)"?', content_type).group(1)
    chunks = body.split(b"--" + boundary.encode("ascii"))
    for chunk in chunks[1:]:
        if chunk.startswith(b"--"):
            break
        head, _, payload = chunk.lstrip(b"\r\n").partition(b"\r\n\r\n")
        if b'name="scores"' in head:
            return payload[:-2] if payload.endswith(b"\r\n") else payload
    raise AssertionError("no scores part in response")


def post_case(client: TestClient, case: dict):
    return client.post("/segment", files={
        "image": ("image.png", case_image(case), "image/png"),
        "meta_query": ("meta_query.json", case_meta_query_bytes(case), "application/json"),
    })


def test_capabilities_matches_golden(stub_app):
    client = TestClient(stub_app)
    response = client.get("/capabilities")
    assert response.status_code == 200
    assert response.json() == golden_capabilities()


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_case(stub_app, case):
    client = TestClient(stub_app)
    response = post_case(client, case)
    expect = case["expect"]
    assert response.status_code == expect["status"], response.content
    if expect["status"] == 200:
        scores = split_scores_part(response.content, response.headers["content-type"])
        assert scores == golden_scores(case)  # byte-identical to the golden PNG
    else:
        assert response.json() == {"reason": expect["reason"]}


def test_every_reason_code_appears_in_fixture_set():
    from cotseg_adapter import validate

    fixture_reasons = {c["expect"]["reason"] for c in CASES if c["expect"]["status"] == 422}
    all_codes = {
        validate.MALFORMED_JSON, validate.UNSUPPORTED_INPUT_TYPE, validate.MISSING_COORDS,
        validate.UNEXPECTED_COORDS, validate.OUT_OF_RANGE, validate.EMPTY_PROMPT,
    }
    assert fixture_reasons == all_codes


def test_identical_requests_are_byte_identical(stub_app):
    client = TestClient(stub_app)
    case = next(c for c in CASES if c["expect"]["status"] == 200)
    first = post_case(client, case)
    second = post_case(client, case)
    assert first.content == second.content


def test_missing_part_rejected(stub_app):
    client = TestClient(stub_app)
    case = CASES[0]
    response = client.post("/segment", files={"image": ("image.png", case_image(case), "image/png")})
    assert response.status_code == 422
    assert response.json() == {"reason": "malformed_json"}


def test_box_fill_is_sixteen_pixels():
    import numpy as np

    from cotseg_adapter.stub import StubBackend

    image = np.zeros((8, 8, 3), dtype=np.uint8)
    scores = StubBackend().segment(image, {
        "input_type": "box", "prompt": "", "labels": [], "coords": [[0.25, 0.25], [0.75, 0.75]],
    })
    assert scores.sum() == 16
    assert scores[2:6, 2:6].sum() == 16  # the (2,2)-(5,5) block
