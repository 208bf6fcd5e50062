from __future__ import annotations

import json

import httpx
import numpy as np
import pytest

from cotseg.agents import ChatRequest, ChatTurn
from cotseg.core import MetaQuery, ScoreMap, SegmentorCapabilities, canonical_json
from cotseg.errors import MetaQueryRejected, TransportError, ValidationError
from cotseg.http_agents import HttpSegmenter, OpenAIChat, decode_multipart, encode_multipart

from conftest import make_image


def chat_reply(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5}}


def make_chat(handler, **kwargs) -> OpenAIChat:
    return OpenAIChat("https://chat.test/v1", "test-model",
                      transport=httpx.MockTransport(handler), sleep=lambda s: None, **kwargs)


class TestOpenAIChat:
    def test_payload_shape_and_reply(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["payload"] = json.loads(request.content)
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json=chat_reply("hello"))

        chat = make_chat(handler, api_key="sk-test")
        img = make_image(2, 2)
        response = chat.chat(ChatRequest((
            ChatTurn("system", "sys"),
            ChatTurn("user", "look", (img,)),
        )))
        assert response.text == "hello"
        assert response.usage == {"prompt_tokens": 10, "completion_tokens": 5}
        assert seen["auth"] == "Bearer sk-test"
        messages = seen["payload"]["messages"]
        assert messages[0] == {"role": "system", "content": "sys"}
        assert messages[1]["content"][0] == {"type": "text", "text": "look"}
        assert messages[1]["content"][1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_rate_limit_retry_idempotent_payload(self):
        bodies = []

        def handler(request: httpx.Request) -> httpx.Response:
            bodies.append(bytes(request.content))
            if len(bodies) < 3:
                return httpx.Response(429)
            return httpx.Response(200, json=chat_reply("ok"))

        chat = make_chat(handler)
        assert chat.chat(ChatRequest((ChatTurn("user", "hi"),))).text == "ok"
        assert len(bodies) == 3
        assert bodies[0] == bodies[1] == bodies[2]

    def test_rate_limit_exhaustion(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(429)

        with pytest.raises(TransportError, match="rate_limited"):
            make_chat(handler).chat(ChatRequest((ChatTurn("user", "hi"),)))

    def test_http_error_status(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(500)

        with pytest.raises(TransportError):
            make_chat(handler).chat(ChatRequest((ChatTurn("user", "hi"),)))

    def test_malformed_body(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, json={"nonsense": True})

        with pytest.raises(TransportError):
            make_chat(handler).chat(ChatRequest((ChatTurn("user", "hi"),)))


CAPS = SegmentorCapabilities(("text", "points", "box"), "binary", True, "stub backend")


def make_segmenter(handler) -> HttpSegmenter:
    return HttpSegmenter("https://seg.test", transport=httpx.MockTransport(handler))


def scores_response(scores: ScoreMap) -> httpx.Response:
    boundary = "testboundary"
    body = encode_multipart([("scores", "scores.png", "image/png", scores.to_png16())], boundary)
    return httpx.Response(200, content=body,
                          headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})


class TestHttpSegmenter:
    def test_capabilities_round_trip(self):
        def handler(request: httpx.Request) -> httpx.Response:
            assert request.url.path == "/capabilities"
            return httpx.Response(200, json=CAPS.to_json_dict())

        assert make_segmenter(handler).capabilities() == CAPS

    def test_segment_round_trip(self):
        image = make_image(5, 4)
        expected = ScoreMap.from_array(np.linspace(0, 1, 20, dtype=np.float64).reshape(4, 5)
                                       .round(3).astype(np.float32))
        # quantize onto the wire grid so the loopback compares equal
        expected = ScoreMap.from_png16(expected.to_png16())
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            assert request.url.path == "/segment"
            parts = decode_multipart(request.content, request.headers["content-type"])
            seen["meta_query"] = json.loads(parts["meta_query"])
            seen["image_bytes"] = parts["image"]
            return scores_response(expected)

        mq = MetaQuery("text", prompt="find it", labels=("thing",))
        got = make_segmenter(handler).segment(image, mq)
        assert got == expected
        assert seen["meta_query"] == mq.to_json_dict()
        assert seen["image_bytes"] == image.to_png()

    def test_422_reason_propagates(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(422, json={"reason": "missing_coords"})

        with pytest.raises(MetaQueryRejected) as err:
            make_segmenter(handler).segment(make_image(2, 2), MetaQuery("points", coords=((0.5, 0.5),)))
        assert err.value.reason == "missing_coords"

    def test_wrong_dimensions_rejected(self):
        wrong = ScoreMap.from_array(np.zeros((3, 3), dtype=np.float32))

        def handler(request: httpx.Request) -> httpx.Response:
            return scores_response(wrong)

        with pytest.raises(ValidationError, match="invalid_response_shape"):
            make_segmenter(handler).segment(make_image(2, 2), MetaQuery("text", prompt="p"))

    def test_missing_scores_part(self):
        def handler(request: httpx.Request) -> httpx.Response:
            body = encode_multipart([("other", "x.bin", "application/octet-stream", b"123")], "b1")
            return httpx.Response(200, content=body,
                                  headers={"Content-Type": "multipart/form-data; boundary=b1"})

        with pytest.raises(ValidationError, match="invalid_response_shape"):
            make_segmenter(handler).segment(make_image(2, 2), MetaQuery("text", prompt="p"))


def test_multipart_codec_round_trip():
    parts = [("image", "image.png", "image/png", b"\x89PNG\r\n\x1a\nabc"),
             ("meta_query", "meta_query.json", "application/json", canonical_json({"a": 1}).encode())]
    body = encode_multipart(parts, "XYZ")
    decoded = decode_multipart(body, 'multipart/form-data; boundary="XYZ"')
    assert decoded == {"image": b"\x89PNG\r\n\x1a\nabc", "meta_query": b'{"a":1}'}
