"""Command-line entry point.

Environment: COTSEG_CHAT_ENDPOINT and COTSEG_SEG_ENDPOINT select the live
backends, COTSEG_CHAT_API_KEY authenticates chat. With --replay no
network is touched at all. Config precedence is flag > config file >
built-in default.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import bench, maskops, pipeline
from .agents import AgentBundle, LocalCorpusRetrieval, StubRetrieval
from .cassette import CassetteRecorder, replay_bundle
from .core import ControlAnnotation, ImageData, PipelineConfig, RasterMask, SegQuery
from .errors import CotsegError, DatasetError, ValidationError
from .evaluator import render_masked
from .http_agents import HttpSegmenter, OpenAIChat

CHAT_ENDPOINT_VAR = "COTSEG_CHAT_ENDPOINT"
SEG_ENDPOINT_VAR = "COTSEG_SEG_ENDPOINT"

_BOOL_KEYS = {"retrieval_enabled", "revert_enabled"}
_INT_KEYS = {"max_cot_rounds", "max_refine_rounds"}
_FLOAT_KEYS = {"binarize_threshold"}
_CONFIG_KEYS = {f.name for f in fields(PipelineConfig)}


def parse_config_file(path: str | Path) -> dict:
    """Flat key=value lines mirroring PipelineConfig field names; '#'
    starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _CONFIG_KEYS:
            raise ValidationError("malformed_json", f"{path}:{lineno}: unknown config line {raw!r}")
        if key in _BOOL_KEYS:
            if value.lower() not in ("true", "false"):
                raise ValidationError("malformed_json", f"{path}:{lineno}: {key} must be true or false")
            values[key] = value.lower() == "true"
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def build_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if args.config:
        values.update(parse_config_file(args.config))
    if args.max_rounds is not None:
        values["max_refine_rounds"] = args.max_rounds
    if args.no_revert:
        values["revert_enabled"] = False
    if args.retrieval:
        values["retrieval_enabled"] = True
    if args.no_cot:
        values["max_cot_rounds"] = 0
        values["cot_length_mode"] = "variational"
    elif args.cot_length is not None:
        values["cot_length_mode"] = f"fixed:{args.cot_length}"
        baseline = values.get("max_cot_rounds", PipelineConfig().max_cot_rounds)
        values["max_cot_rounds"] = max(int(baseline), args.cot_length)
    return PipelineConfig(**values)


def load_control(path: str | Path) -> ControlAnnotation:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    rendered = None
    if d.get("rendered"):
        rendered_path = Path(path).parent / d["rendered"]
        rendered = ImageData.from_png(rendered_path.read_bytes(), source_id=rendered_path.name)
    return ControlAnnotation(d["kind"], tuple((float(x), float(y)) for x, y in d["coords"]), rendered)


def _live_bundle(args: argparse.Namespace, parser: argparse.ArgumentParser) -> AgentBundle:
    chat_endpoint = os.environ.get(CHAT_ENDPOINT_VAR)
    seg_endpoint = os.environ.get(SEG_ENDPOINT_VAR)
    if not chat_endpoint or not seg_endpoint:
        parser.error(f"live runs need {CHAT_ENDPOINT_VAR} and {SEG_ENDPOINT_VAR} set (or use --replay)")
    retrieval = LocalCorpusRetrieval(args.corpus) if args.corpus else StubRetrieval()
    return AgentBundle(
        chat=OpenAIChat(chat_endpoint, args.chat_model),
        segmenter=HttpSegmenter(seg_endpoint),
        retrieval=retrieval,
    )


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file (PipelineConfig field names)")
    p.add_argument("--no-cot", action="store_true", help="disable chain-of-thought (max_cot_rounds=0)")
    p.add_argument("--cot-length", type=int, metavar="N",
                   help="demand exactly N question-answer pairs (raises max_cot_rounds to N when needed)")
    p.add_argument("--max-rounds", type=int, metavar="N", help="maximum refinement rounds")
    p.add_argument("--no-revert", action="store_true", help="skip the revert judgment after refinement")
    p.add_argument("--retrieval", action="store_true", help="enable retrieval-augmented reasoning")
    p.add_argument("--corpus", help="local retrieval corpus directory (keyword-named .txt/.png files)")
    p.add_argument("--chat-model", default="gpt-4o", help="chat model name for the live backend")


def cmd_run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.query and not args.control:
        parser.error("provide --query and/or --control")
    cfg = build_config(args)
    image = ImageData.from_png(Path(args.image).read_bytes(), source_id=Path(args.image).name)
    control = load_control(args.control) if args.control else None
    query = SegQuery(args.query or "", control)

    recorder = None
    if args.replay:
        agents = replay_bundle(args.replay)
    else:
        agents = _live_bundle(args, parser)
        if args.record:
            recorder = CassetteRecorder(args.record)
            agents = recorder.wrap(agents)
    try:
        record = pipeline.run(image, query, cfg, agents)
    finally:
        if recorder is not None:
            recorder.close()

    pipeline.write_run_outputs(record, image, args.out, dump_rounds=args.dump_rounds)
    print(f"termination: {record.termination_reason} "
          f"(refine rounds used: {record.refine_rounds_used}, flags: {', '.join(record.flags) or 'none'})")
    if record.termination_reason == pipeline.TERM_FAILURE and not any(r.masks for r in record.rounds):
        return 1
    return 0


def cmd_eval(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    cfg = build_config(args)
    try:
        samples = bench.load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.replay_dir:
        replay_root = Path(args.replay_dir)

        def agents(sample: bench.Sample) -> AgentBundle:
            return replay_bundle(replay_root / (sample.sample_id.replace("#", "_") + ".jsonl"))
    else:
        agents = _live_bundle(args, parser)

    try:
        report = bench.evaluate(samples, cfg, agents, parallelism=args.parallel, label=args.label)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(args.out)
    bench.emit_report(report, out / "report.json", "json")
    bench.emit_report(report, out / "report.md", "markdown-table", percent=not args.raw)
    print(f"gIoU {report.giou * 100.0:.1f} cIoU {report.ciou * 100.0:.1f}")
    print(f"mean seconds per pair {report.mean_seconds:.3f}")
    return 0


def cmd_render(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    image = ImageData.from_png(Path(args.image).read_bytes(), source_id=Path(args.image).name)
    mask = RasterMask.from_png(Path(args.mask).read_bytes())
    try:
        overlay = maskops.overlay(image, mask, alpha=args.alpha)
        masked = render_masked(image, mask)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "overlay.png").write_bytes(overlay.to_png())
    (out / "masked.png").write_bytes(masked.to_png())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotseg", description="Reasoning segmentation with chain-of-thought meta-queries and self-correction")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="segment one image for one query")
    p_run.add_argument("--image", required=True, help="input image (PNG/JPEG)")
    p_run.add_argument("--query", help="natural-language query")
    p_run.add_argument("--control", help="control annotation JSON file")
    p_run.add_argument("--out", required=True, help="output directory (run.json, mask.png, overlay.png)")
    p_run.add_argument("--record", metavar="CASSETTE", help="record all agent traffic to a cassette")
    p_run.add_argument("--replay", metavar="CASSETTE", help="serve all agent calls from a cassette (no network)")
    p_run.add_argument("--dump-rounds", action="store_true", help="also write each round's intermediate masks")
    _add_config_flags(p_run)

    p_eval = sub.add_parser("eval", help="evaluate a dataset directory")
    p_eval.add_argument("--dataset", required=True, help="dataset root directory")
    p_eval.add_argument("--out", required=True, help="output directory (report.json, report.md)")
    p_eval.add_argument("--parallel", type=int, default=1, help="concurrent samples")
    p_eval.add_argument("--replay-dir", help="directory of per-sample cassettes (<sample>_<i>.jsonl)")
    p_eval.add_argument("--label", default="cotseg", help="method label in the report")
    p_eval.add_argument("--raw", action="store_true", help="markdown ratios instead of percent")
    _add_config_flags(p_eval)

    p_render = sub.add_parser("render", help="render overlay and masked composites")
    p_render.add_argument("--image", required=True)
    p_render.add_argument("--mask", required=True, help="1-bit mask PNG")
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--alpha", type=float, default=0.5)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args, parser)
        if args.command == "eval":
            return cmd_eval(args, parser)
        return cmd_render(args, parser)
    except CotsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
