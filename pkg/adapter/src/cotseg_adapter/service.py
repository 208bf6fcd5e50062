"""FastAPI app serving the segmenter wire protocol.

GET /capabilities answers the capability JSON. POST /segment takes
multipart parts "image" (PNG) and "meta_query" (JSON) and answers 200
with a multipart part "scores" (16-bit grayscale PNG of the image's
dimensions) or 422 with {"reason": <code>}. The response boundary is
fixed so identical requests produce byte-identical responses.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, File, UploadFile
from fastapi.responses import JSONResponse, Response

from . import pngio
from .models import ModelBackend, load_wrapper
from .stub import StubBackend
from .validate import MALFORMED_JSON, check_meta_query

RESPONSE_BOUNDARY = "cotseg-scores"


def _scores_response(png: bytes) -> Response:
    body = (
        f"--{RESPONSE_BOUNDARY}\r\n"
        'Content-Disposition: form-data; name="scores"; filename="scores.png"\r\n'
        "Content-Type: image/png\r\n\r\n".encode("ascii") + png + b"\r\n"
        + f"--{RESPONSE_BOUNDARY}--\r\n".encode("ascii")
    )
    return Response(content=body, media_type=f"multipart/form-data; boundary={RESPONSE_BOUNDARY}")


def _reject(reason: str) -> JSONResponse:
    return JSONResponse(status_code=422, content={"reason": reason})


def create_app(fixtures: str | Path | None = None, model: str | None = None) -> FastAPI:
    backend = ModelBackend(load_wrapper(model)) if model else StubBackend(fixtures)
    app = FastAPI(title="cotseg-adapter", version="0.1.0")

    @app.get("/capabilities")
    def capabilities() -> dict:
        return backend.capabilities()

    @app.post("/segment")
    async def segment(image: UploadFile = File(None), meta_query: UploadFile = File(None)):
        if image is None or meta_query is None:
            return _reject(MALFORMED_JSON)
        try:
            rgb = pngio.read_rgb(await image.read())
        except Exception:
            return _reject(MALFORMED_JSON)
        try:
            mq = json.loads((await meta_query.read()).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return _reject(MALFORMED_JSON)

        reason = check_meta_query(mq, backend.capabilities()["input_types"])
        if reason is not None:
            return _reject(reason)
        scores = backend.segment(rgb, mq)
        return _scores_response(pngio.write_scores(scores))

    return app
