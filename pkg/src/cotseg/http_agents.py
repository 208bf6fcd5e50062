"""HTTP agent backends.

Chat uses the OpenAI-compatible chat-completions JSON shape; the API key
comes only from the COTSEG_CHAT_API_KEY environment variable so configs
and cassettes stay shareable. The segmenter speaks the wire protocol:
GET /capabilities returns the capability JSON, POST /segment takes
multipart parts "image" (PNG) and "meta_query" (JSON) and answers 200
with a multipart part "scores" (16-bit grayscale PNG) or 422 with
{"reason": <code>}.
"""

from __future__ import annotations

import base64
import json
import os
import re
import time

import httpx

from .agents import ChatResponse, check_score_dims
from .core import ImageData, MetaQuery, ScoreMap, SegmentorCapabilities, canonical_json
from .errors import INVALID_RESPONSE_SHAPE, MetaQueryRejected, TransportError, ValidationError

CHAT_API_KEY_VAR = "COTSEG_CHAT_API_KEY"


def encode_multipart(parts: list[tuple[str, str, str, bytes]], boundary: str) -> bytes:
    """Assemble multipart/form-data from (name, filename, content_type,
    payload) tuples."""
    chunks = []
    for name, filename, content_type, payload in parts:
        chunks.append(
            f"--{boundary}\r\n"
            f'Content-Disposition: form-data; name="{name}"; filename="{filename}"\r\n'
            f"Content-Type: {content_type}\r\n\r\n".encode("ascii") + payload + b"\r\n"
        )
    chunks.append(f"--{boundary}--\r\n".encode("ascii"))
    return b"".join(chunks)


def decode_multipart(body: bytes, content_type: str) -> dict[str, bytes]:
    """Split a multipart body into {part name: payload}."""
    m = re.search(r'boundary="?([^";]+)"?', content_type)
    if not m:
        raise ValidationError(INVALID_RESPONSE_SHAPE, f"no multipart boundary in {content_type!r}")
    delim = b"--" + m.group(1).encode("ascii")
    parts: dict[str, bytes] = {}
    for chunk in body.split(delim)[1:]:
        if chunk.startswith(b"--"):
            break
        chunk = chunk.lstrip(b"\r\n")
        header_end = chunk.find(b"\r\n\r\n")
        if header_end == -1:
            continue
        headers = chunk[:header_end].decode("ascii", errors="replace")
        payload = chunk[header_end + 4:]
        if payload.endswith(b"\r\n"):
            payload = payload[:-2]
        name_m = re.search(r'name="([^"]+)"', headers)
        if name_m:
            parts[name_m.group(1)] = payload
    return parts


class OpenAIChat:
    """Chat-completions client with bounded backoff on rate limits.

    Retries never alter the request payload; only HTTP 429 is retried,
    with exponential backoff up to three attempts beyond the first.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout: float = 120.0,
        max_retries: int = 3,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self._url = endpoint.rstrip("/") + "/chat/completions"
        self._model = model
        self._api_key = api_key if api_key is not None else os.environ.get(CHAT_API_KEY_VAR)
        self._temperature = temperature
        self._max_retries = max_retries
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _messages(self, request) -> list[dict]:
        messages = []
        for turn in request.turns:
            if not turn.images:
                messages.append({"role": turn.role, "content": turn.text})
                continue
            content: list[dict] = []
            if turn.text:
                content.append({"type": "text", "text": turn.text})
            for image in turn.images:
                b64 = base64.b64encode(image.to_png()).decode("ascii")
                content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
            messages.append({"role": turn.role, "content": content})
        return messages

    def chat(self, request) -> ChatResponse:
        payload = {
            "model": self._model,
            "temperature": self._temperature,
            "messages": self._messages(request),
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body = canonical_json(payload).encode("utf-8")

        start = time.perf_counter()
        for attempt in range(self._max_retries + 1):
            try:
                response = self._client.post(self._url, content=body, headers=headers)
            except httpx.HTTPError as exc:
                raise TransportError(f"chat transport failure: {exc}") from exc
            if response.status_code == 429:
                if attempt == self._max_retries:
                    raise TransportError("rate_limited: retries exhausted")
                self._sleep(0.5 * (2 ** attempt))
                continue
            if response.status_code != 200:
                raise TransportError(f"chat backend returned HTTP {response.status_code}")
            break

        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat-completions response: {exc}") from exc
        if isinstance(text, list):  # some servers return content parts
            text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
        usage = data.get("usage") if isinstance(data.get("usage"), dict) else None
        return ChatResponse(str(text), time.perf_counter() - start, usage)


class HttpSegmenter:
    """Client side of the segmenter wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 120.0, transport: httpx.BaseTransport | None = None):
        self._base = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def capabilities(self) -> SegmentorCapabilities:
        try:
            response = self._client.get(self._base + "/capabilities")
        except httpx.HTTPError as exc:
            raise TransportError(f"capabilities transport failure: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"capabilities returned HTTP {response.status_code}")
        try:
            return SegmentorCapabilities.from_json_dict(response.json())
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed capabilities response: {exc}") from exc

    def segment(self, image: ImageData, meta_query: MetaQuery) -> ScoreMap:
        files = {
            "image": ("image.png", image.to_png(), "image/png"),
            "meta_query": ("meta_query.json", canonical_json(meta_query.to_json_dict()).encode("utf-8"), "application/json"),
        }
        try:
            response = self._client.post(self._base + "/segment", files=files)
        except httpx.HTTPError as exc:
            raise TransportError(f"segment transport failure: {exc}") from exc
        if response.status_code == 422:
            try:
                reason = response.json().get("reason", "invalid_meta_query")
            except ValueError:
                reason = "invalid_meta_query"
            raise MetaQueryRejected(reason)
        if response.status_code != 200:
            raise TransportError(f"segment returned HTTP {response.status_code}")
        parts = decode_multipart(response.content, response.headers.get("content-type", ""))
        if "scores" not in parts:
            raise ValidationError(INVALID_RESPONSE_SHAPE, "response lacks a 'scores' part")
        scores = ScoreMap.from_png16(parts["scores"])
        if scores.width != image.width or scores.height != image.height:
            raise ValidationError(INVALID_RESPONSE_SHAPE, f"scores {scores.width}x{scores.height} vs image {image.width}x{image.height}")
        return check_score_dims(scores, image)
