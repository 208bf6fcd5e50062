"""End-to-end run: reason, segment, assess, refine, combine, choose.

One run is strictly sequential. Agent transport failures before the
first mask exists abort with a partial record; once a mask exists,
failures finalize the run with the best mask so far. Every intermediate
artifact and per-stage wall-clock duration lands in the RunRecord.
"""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from pathlib import Path

from . import evaluator, maskops, reasoner
from .agents import AgentBundle
from .core import (
    CoTTrace,
    ImageData,
    PipelineConfig,
    RasterMask,
    RoundRecord,
    RunRecord,
    SegQuery,
    validate_meta_query,
)
from .errors import CotsegError

log = logging.getLogger(__name__)

TERM_CORRECT = "judged_correct"
TERM_MAX_ROUNDS = "max_rounds"
TERM_FAILURE = "agent_failure_fallback"


def run(image: ImageData, query: SegQuery, cfg: PipelineConfig, agents: AgentBundle) -> RunRecord:
    """Execute the full loop and return the run record."""
    started = time.perf_counter()
    rounds: list[RoundRecord] = []
    flags: list[str] = []
    trace = CoTTrace()

    def finish(mask: RasterMask, reason: str) -> RunRecord:
        return RunRecord(
            config=cfg,
            query=query.text,
            source_id=image.source_id,
            width=image.width,
            height=image.height,
            trace=trace,
            rounds=tuple(rounds),
            final_mask=mask,
            termination_reason=reason,
            flags=tuple(flags),
            total_seconds=time.perf_counter() - started,
        )

    empty = RasterMask.empty(image.width, image.height)

    try:
        caps = agents.segmenter.capabilities()
        t0 = time.perf_counter()
        result = reasoner.reason(image, query, caps, cfg, agents.chat, agents.retrieval)
        trace = result.trace
        if result.fallback:
            flags.append("reason_fallback")
        check = validate_meta_query(result.meta_query, caps)
        if not check:
            raise CotsegError(f"meta-query rejected before segmentation: {check.reason}")
        scores = agents.segmenter.segment(image, result.meta_query)
        mask = maskops.binarize(scores, cfg.binarize_threshold)
        rounds.append(RoundRecord(
            round_index=0,
            meta_queries=(result.meta_query,),
            score_maps=(scores,),
            masks=(mask,),
            duration_seconds=time.perf_counter() - t0,
        ))
    except CotsegError as exc:
        log.warning("run aborted before a first mask existed: %s", exc)
        flags.append("initial_agent_failure")
        return finish(empty, TERM_FAILURE)

    current = mask
    termination = TERM_MAX_ROUNDS
    for r in range(1, cfg.max_refine_rounds + 1):
        t0 = time.perf_counter()
        try:
            assessment = evaluator.assess_and_refine(image, current, query, caps, agents.chat)
        except CotsegError as exc:
            log.warning("assessment failed in round %d: %s", r, exc)
            flags.append(f"refine_agent_failure_round_{r}")
            termination = TERM_FAILURE
            break
        if assessment.fail_open:
            flags.append(f"assess_fail_open_round_{r}")
        verdict = assessment.verdict

        if verdict.correct:
            rounds.append(RoundRecord(round_index=r, verdict=verdict, duration_seconds=time.perf_counter() - t0))
            termination = TERM_CORRECT
            break

        meta_queries = tuple(m for m in (verdict.positive, verdict.negative) if m is not None)
        try:
            pos_scores = agents.segmenter.segment(image, verdict.positive) if verdict.positive is not None else None
            neg_scores = agents.segmenter.segment(image, verdict.negative) if verdict.negative is not None else None
        except CotsegError as exc:
            log.warning("refinement segmentation failed in round %d: %s", r, exc)
            flags.append(f"refine_agent_failure_round_{r}")
            rounds.append(RoundRecord(round_index=r, verdict=verdict, duration_seconds=time.perf_counter() - t0))
            termination = TERM_FAILURE
            break
        pos = maskops.binarize(pos_scores, cfg.binarize_threshold) if pos_scores is not None else empty
        neg = maskops.binarize(neg_scores, cfg.binarize_threshold) if neg_scores is not None else empty
        score_maps = tuple(s for s in (pos_scores, neg_scores) if s is not None)

        combined = maskops.combine(current, pos, neg)
        decision = None
        chosen = combined
        if cfg.revert_enabled:
            try:
                chosen = evaluator.choose(image, query, current, combined, agents.chat)
            except CotsegError as exc:
                log.warning("revert judgment failed in round %d: %s", r, exc)
                flags.append(f"refine_agent_failure_round_{r}")
                rounds.append(RoundRecord(
                    round_index=r,
                    meta_queries=meta_queries,
                    score_maps=score_maps,
                    masks=(combined,),
                    verdict=verdict,
                    duration_seconds=time.perf_counter() - t0,
                ))
                termination = TERM_FAILURE
                break
            decision = "previous" if chosen is current else "refined"

        rounds.append(RoundRecord(
            round_index=r,
            meta_queries=meta_queries,
            score_maps=score_maps,
            masks=(combined, chosen),
            verdict=verdict,
            revert_decision=decision,
            duration_seconds=time.perf_counter() - t0,
        ))
        current = chosen

    return finish(current, termination)


def run_no_cot(image: ImageData, query: SegQuery, cfg: PipelineConfig, agents: AgentBundle) -> RunRecord:
    """Ablation entry point: identical to run with chain-of-thought
    disabled."""
    no_cot_cfg = replace(cfg, max_cot_rounds=0, cot_length_mode="variational")
    return run(image, query, no_cot_cfg, agents)


def write_run_outputs(record: RunRecord, image: ImageData, out_dir: str | Path,
                      dump_rounds: bool = False) -> None:
    """Dump run.json, mask.png, and overlay.png into a run directory;
    with dump_rounds each intermediate mask also lands as a 1-bit PNG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(record.to_json(), encoding="utf-8")
    (out / "mask.png").write_bytes(record.final_mask.to_png())
    (out / "overlay.png").write_bytes(maskops.overlay(image, record.final_mask).to_png())
    if dump_rounds:
        for round_record in record.rounds:
            for j, mask in enumerate(round_record.masks):
                name = f"round_{round_record.round_index}_mask_{j}.png"
                (out / name).write_bytes(mask.to_png())
