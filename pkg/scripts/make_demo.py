#!/usr/bin/env python3
"""Build the offline demo fixtures under demo/.

Creates a synthetic walking-the-dog scene, records a cassette of a full
scripted run (chain of thought, one refinement round, revert judgment),
and lays out a one-sample dataset with a per-sample cassette so both
`cotseg run --replay` and `cotseg eval --replay-dir` work with no
network and no credentials.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from cotseg.agents import AgentBundle, OracleSegmenter, ScriptedChat
from cotseg.cassette import record_bundle
from cotseg.core import ImageData, PipelineConfig, RasterMask, SegQuery
from cotseg import pipeline

ROOT = Path(__file__).resolve().parent.parent
DEMO = ROOT / "demo"
TRANSCRIPTS = ROOT / "tests" / "fixtures" / "transcripts"

QUERY = "What is the object that the person in the picture is holding onto while walking his dog?"
VERDICT_TRUE = "- Correctness: <correctness>True</correctness>"


def build_scene(width: int = 48, height: int = 48) -> tuple[ImageData, RasterMask, RasterMask]:
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    leash = np.zeros((height, width), dtype=bool)
    leash[4:10, 4:20] = True
    clothing = np.zeros((height, width), dtype=bool)
    clothing[30:44, 30:40] = True
    return (
        ImageData.from_array(rgb, "dog.png"),
        RasterMask.from_array(leash),
        RasterMask.from_array(clothing),
    )


def scripted_agents(leash: RasterMask, clothing: RasterMask) -> AgentBundle:
    first_turn = (TRANSCRIPTS / "dog_first_turn.txt").read_text(encoding="utf-8") + "leash.\n"
    self_correction = (TRANSCRIPTS / "dog_self_correction.txt").read_text(encoding="utf-8")
    chat = ScriptedChat(
        {
            "decide whether the segmentation result": [self_correction, VERDICT_TRUE],
            "Decide which candidate better reflects": "<choice>B</choice>",
        },
        default=first_turn,
    )
    return AgentBundle(chat=chat, segmenter=OracleSegmenter({"leash": leash, "person's clothing": clothing}))


def main() -> int:
    DEMO.mkdir(exist_ok=True)
    image, leash, clothing = build_scene()
    (DEMO / "dog.png").write_bytes(image.to_png())

    wrapped, recorder = record_bundle(scripted_agents(leash, clothing), DEMO / "dog.jsonl")
    with recorder:
        record = pipeline.run(image, SegQuery(QUERY), PipelineConfig(), wrapped)
    print(f"single-run cassette: termination={record.termination_reason}, "
          f"refine rounds={record.refine_rounds_used}")

    dataset = DEMO / "dataset"
    dataset.mkdir(exist_ok=True)
    (dataset / "dog.png").write_bytes(image.to_png())
    (dataset / "dog.json").write_text(json.dumps({"text": [QUERY]}), encoding="utf-8")
    (dataset / "dog.mask.png").write_bytes(record.final_mask.to_png())

    cassettes = DEMO / "cassettes"
    cassettes.mkdir(exist_ok=True)
    wrapped, recorder = record_bundle(scripted_agents(leash, clothing), cassettes / "dog_0.jsonl")
    with recorder:
        pipeline.run(image, SegQuery(QUERY), PipelineConfig(), wrapped)

    print(f"demo fixtures written under {DEMO}")
    print("try:")
    print(f'  cotseg run --image {DEMO}/dog.png --query "{QUERY}" --replay {DEMO}/dog.jsonl --out {DEMO}/out')
    print(f"  cotseg eval --dataset {DEMO}/dataset --replay-dir {DEMO}/cassettes --out {DEMO}/out-eval")
    return 0


if __name__ == "__main__":
    sys.exit(main())
