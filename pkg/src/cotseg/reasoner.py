"""Coarse-to-fine reasoning: one chat exchange that elicits the full
question/answer chain and compiles a validated meta-query.

The whole chain happens inside a single chat completion (the template
elicits every pair at once); one repair retry is allowed when the reply
does not follow the format, after which the original query text becomes
the meta-query and the run is flagged as a fallback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import protocol
from .agents import ChatAgent, ChatRequest, ChatTurn, RetrievalAgent
from .core import (
    CoTTrace,
    ImageData,
    MetaQuery,
    PipelineConfig,
    SegQuery,
    SegmentorCapabilities,
    denormalize,
    validate_meta_query,
)
from . import imaging
from .errors import ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReasonResult:
    trace: CoTTrace
    meta_query: MetaQuery
    fallback: bool = False


def encode_control(query: SegQuery, image: ImageData) -> tuple[ImageData, str]:
    """Draw the control annotation onto a copy of the image and describe
    it in text; both ride along in the first-turn prompt.

    Points become filled red discs (radius max(3px, 1% of the smaller
    dimension)), boxes a 2px red outline, scribbles a 2px red polyline;
    a highlight uses the caller-supplied rendered image when present,
    else a translucent red fill.
    """
    ann = query.control
    if ann is None:
        raise ParseError("missing_control", "query carries no control annotation")
    coord_text = ", ".join(f"({x:g}, {y:g})" for x, y in ann.coords)
    description = (
        f"The user provided a {ann.kind} annotation, drawn in red on the attached copy "
        f"of the image. Normalized (x, y) coordinates: {coord_text}."
    )
    if ann.kind == "highlight" and ann.rendered is not None:
        return ann.rendered, description

    rgb = image.to_array().copy()
    pixels = denormalize(ann.coords, image.width, image.height)
    if ann.kind == "points":
        rgb = imaging.draw_points(rgb, pixels, imaging.disc_radius(image.width, image.height))
    elif ann.kind == "box":
        rgb = imaging.draw_box(rgb, pixels[0], pixels[1])
    elif ann.kind == "scribble":
        rgb = imaging.draw_polyline(rgb, pixels)
    elif len(pixels) >= 3:
        rgb = imaging.fill_polygon_tint(rgb, pixels)
    else:
        rgb = imaging.draw_points(rgb, pixels, imaging.disc_radius(image.width, image.height))
    annotated = ImageData.from_array(rgb, f"{image.source_id}#annotated" if image.source_id else "annotated")
    return annotated, description


def extract_keywords(query: SegQuery, chat: ChatAgent) -> list[str]:
    """One small chat call asking for a period-separated keyword list;
    returns [] when there is nothing to extract."""
    if not query.text.strip():
        return []
    prompt = protocol.render_keywords(query)
    request = ChatRequest((ChatTurn("system", prompt.system), ChatTurn("user", query.text)))
    return protocol.parse_labels(chat.chat(request).text)


def _first_turn_request(
    image: ImageData,
    query: SegQuery,
    prompt: protocol.PromptText,
) -> ChatRequest:
    turns: list[ChatTurn] = [ChatTurn("system", prompt.system)]
    first = True
    for text, images in prompt.user_turns:
        attach = (image, *images) if first else images
        turns.append(ChatTurn("user", text, attach))
        first = False
    if query.control is not None:
        annotated, description = encode_control(query, image)
        turns.append(ChatTurn("user", description, (annotated,)))
    return ChatRequest(tuple(turns))


def _fallback_meta_query(query: SegQuery) -> MetaQuery:
    text = query.text.strip()
    if not text and query.control is not None:
        text = f"Segment the object indicated by the {query.control.kind} annotation."
    return MetaQuery("text", prompt=text, labels=())


def reason(
    image: ImageData,
    query: SegQuery,
    caps: SegmentorCapabilities,
    cfg: PipelineConfig,
    chat: ChatAgent,
    retrieval: RetrievalAgent | None = None,
) -> ReasonResult:
    """Run the first-turn exchange and compile the meta-query.

    Issues exactly one primary chat call, plus at most one repair retry
    and at most one keyword call when retrieval is enabled.
    """
    retrieved = None
    if cfg.retrieval_enabled and retrieval is not None:
        keywords = extract_keywords(query, chat)
        if keywords:
            retrieved = retrieval.retrieve(keywords)

    cot_rounds = 0 if cfg.max_cot_rounds == 0 else cfg.fixed_cot_length
    prompt = protocol.render_first_turn(query, caps, retrieved, cot_rounds=cot_rounds)
    request = _first_turn_request(image, query, prompt)

    parsed = None
    reply = chat.chat(request)
    try:
        parsed = protocol.parse_first_turn(reply.text)
    except ParseError as first_error:
        log.debug("first-turn parse failed (%s); retrying once", first_error)
        retry = ChatRequest(request.turns + (
            ChatTurn("assistant", reply.text),
            ChatTurn("user", protocol.REPAIR_NOTE),
        ))
        reply = chat.chat(retry)
        try:
            parsed = protocol.parse_first_turn(reply.text)
        except ParseError as second_error:
            log.warning("first-turn parse failed twice (%s); falling back to the raw query", second_error)

    if parsed is None:
        return ReasonResult(CoTTrace(), _fallback_meta_query(query), fallback=True)

    trace = parsed.trace.truncated(cfg.max_cot_rounds)
    meta_query = MetaQuery("text", prompt=parsed.prompt_line, labels=parsed.labels)
    if not validate_meta_query(meta_query, caps):
        fallback = _fallback_meta_query(query)
        return ReasonResult(trace, fallback, fallback=True)
    return ReasonResult(trace, meta_query)
