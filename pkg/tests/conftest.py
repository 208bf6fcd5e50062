"""Shared fixtures: the offline guard and deterministic scenario builders.

The whole suite runs with networking disabled; any attempt to open an
INET/INET6 connection fails the test. HTTP-client tests use in-process
mock transports.
"""

from __future__ import annotations

import socket
from pathlib import Path

import numpy as np
import pytest

from cotseg.agents import AgentBundle, OracleSegmenter, ScriptedChat
from cotseg.core import ImageData, RasterMask

FIXTURES = Path(__file__).parent / "fixtures"

_REAL_SOCKET = socket.socket


class _GuardedSocket(socket.socket):
    def connect(self, address):
        raise RuntimeError(f"network access attempted during the offline suite: connect{address!r}")

    def connect_ex(self, address):
        raise RuntimeError(f"network access attempted during the offline suite: connect_ex{address!r}")


@pytest.fixture(autouse=True, scope="session")
def no_network():
    socket.socket = _GuardedSocket
    try:
        yield
    finally:
        socket.socket = _REAL_SOCKET


def transcript(name: str) -> str:
    return (FIXTURES / "transcripts" / name).read_text(encoding="utf-8")


def make_image(width: int, height: int, seed: int = 0, source_id: str = "test.png") -> ImageData:
    rng = np.random.default_rng(seed)
    return ImageData.from_array(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8), source_id)


def rect_mask(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> RasterMask:
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return RasterMask.from_array(bits)


# Scripted-reply helpers -------------------------------------------------

SELF_CORRECTION_KEY = "decide whether the segmentation result"
COMPARE_KEY = "Decide which candidate better reflects"

VERDICT_TRUE = "- Correctness: <correctness>True</correctness>"


def first_turn_reply(labels: str, where: str = "center") -> str:
    return (
        f"Prompt: The image shows a test scene. Please segment the {labels} "
        f"located at the {where} of the image.\n{labels}.\n"
    )


def verdict_false_reply(positive: str | None, plabels: str | None,
                        negative: str | None = None, nlabels: str | None = None) -> str:
    return (
        "- Reasoning process:\n"
        "1. Original image: A test scene.\n"
        "2. Segmentation image: A partial result.\n"
        "3. Summary: The segmentation needs refinement.\n"
        "- Correctness: False\n"
        "- Meta-queries (Output if the correctness is false):\n"
        f"1. Positive: {positive or 'None'}\n"
        f"2. Negative: {negative or 'None'}\n"
        "- Labels:\n"
        f"1. Positive: {plabels or 'None.'}\n"
        f"2. Negative: {nlabels or 'None.'}\n"
    )


GAIN_QUERY = "segment the whole target object"


def gain_scenario(width: int = 16, height: int = 16):
    """First-turn mask covers the left half of the target (IoU 0.5); one
    positive refinement adds the right half (IoU 1.0)."""
    image = make_image(width, height, seed=7, source_id="gain.png")
    left = rect_mask(width, height, 0, 4, width // 2, 12)
    right = rect_mask(width, height, width // 2, 4, width, 12)
    gt = RasterMask.from_array(left.to_array() | right.to_array())

    chat = ScriptedChat(
        {
            SELF_CORRECTION_KEY: [
                verdict_false_reply(
                    "Please also segment the right part of the target, located at the right of the original image.",
                    "right part.",
                ),
                VERDICT_TRUE,
            ],
            COMPARE_KEY: "<choice>B</choice>",
        },
        default=first_turn_reply("left part"),
    )
    segmenter = OracleSegmenter({"left part": left, "right part": right})
    return image, gt, AgentBundle(chat=chat, segmenter=segmenter)


DOG_QUERY = "What is the object that the person in the picture is holding onto while walking his dog?"


def dog_scenario(width: int = 48, height: int = 48):
    """Deterministic multi-round story built on the walking-the-dog
    transcripts: partial leash first, refinement adds the rest and
    removes the clothing."""
    image = make_image(width, height, seed=3, source_id="dog.png")
    leash = rect_mask(width, height, 4, 4, 20, 10)
    clothing = rect_mask(width, height, 30, 30, 40, 44)

    first = transcript("dog_first_turn.txt") + "leash.\n"
    chat = ScriptedChat(
        {
            SELF_CORRECTION_KEY: [transcript("dog_self_correction.txt"), VERDICT_TRUE],
            COMPARE_KEY: "<choice>B</choice>",
        },
        default=first,
    )
    segmenter = OracleSegmenter({"leash": leash, "person's clothing": clothing})
    return image, AgentBundle(chat=chat, segmenter=segmenter)
