"""Mask assessment and refinement directives.

Assessment and refinement are one chat call: the self-correction prompt
asks for the verdict and, when incorrect, the positive/negative
directives together. An unparseable verdict (after one repair retry)
fails open as correct so a broken evaluator can never spin the
refinement loop; the pipeline records the flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import protocol
from .agents import ChatAgent, ChatRequest, ChatTurn
from .core import EvalVerdict, ImageData, RasterMask, SegQuery, SegmentorCapabilities
from .errors import DIMENSION_MISMATCH, ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Assessment:
    verdict: EvalVerdict
    fail_open: bool = False


def render_masked(image: ImageData, mask: RasterMask) -> ImageData:
    """Copy masked pixels from the image; everything else turns pure
    white."""
    if mask.width != image.width or mask.height != image.height:
        raise ValidationError(DIMENSION_MISMATCH, f"mask {mask.width}x{mask.height} vs image {image.width}x{image.height}")
    rgb = np.where(mask.to_array()[:, :, None], image.to_array(), np.uint8(255))
    return ImageData.from_array(rgb, image.source_id)


def assess_and_refine(
    image: ImageData,
    mask: RasterMask,
    query: SegQuery,
    caps: SegmentorCapabilities,
    chat: ChatAgent,
) -> Assessment:
    """Judge the mask against the query; on an incorrect verdict the
    result carries the refinement directives."""
    masked = render_masked(image, mask)
    prompt = protocol.render_self_correction(query, caps)
    request = ChatRequest((
        ChatTurn("system", prompt.system),
        ChatTurn("user", "", (image,)),
        ChatTurn("user", "", (masked,)),
    ))

    reply = chat.chat(request)
    try:
        return Assessment(protocol.parse_self_correction(reply.text, caps))
    except ParseError as first_error:
        log.debug("self-correction parse failed (%s); retrying once", first_error)
    retry = ChatRequest(request.turns + (
        ChatTurn("assistant", reply.text),
        ChatTurn("user", protocol.REPAIR_NOTE),
    ))
    reply = chat.chat(retry)
    try:
        return Assessment(protocol.parse_self_correction(reply.text, caps))
    except ParseError as second_error:
        log.warning("self-correction parse failed twice (%s); failing open as correct", second_error)
        return Assessment(EvalVerdict("", True), fail_open=True)


def choose(
    image: ImageData,
    query: SegQuery,
    prev: RasterMask,
    refined: RasterMask,
    chat: ChatAgent,
) -> RasterMask:
    """Revert judgment: A/B-compare the two masked composites and return
    the chosen argument unmodified. A missing or malformed choice tag
    counts as keeping the refined mask."""
    prompt = protocol.render_compare(query)
    request = ChatRequest((
        ChatTurn("system", prompt.system),
        ChatTurn("user", "Candidate A (previous segmentation):", (render_masked(image, prev),)),
        ChatTurn("user", "Candidate B (refined segmentation):", (render_masked(image, refined),)),
    ))
    reply = chat.chat(request)
    try:
        decision = protocol.parse_compare(reply.text)
    except ParseError:
        log.debug("revert judgment reply had no choice tag; keeping the refined mask")
        return refined
    return prev if decision == protocol.CHOICE_PREVIOUS else refined
