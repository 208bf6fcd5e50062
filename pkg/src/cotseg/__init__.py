"""Training-free reasoning segmentation.

A chat model turns an implicit query into an explicit meta-query through
chain-of-thought reasoning, a pluggable segmenter turns the meta-query
into a score map, and an evaluator loop judges the mask, issues
positive/negative refinement directives, and may revert a refinement
that made things worse.
"""

from .agents import (
    AgentBundle,
    ChatRequest,
    ChatResponse,
    ChatTurn,
    LocalCorpusRetrieval,
    OracleSegmenter,
    RetrievedContext,
    ScriptedChat,
    StubRetrieval,
)
from .core import (
    ControlAnnotation,
    CoTTrace,
    EvalVerdict,
    ImageData,
    MetaQuery,
    PipelineConfig,
    RasterMask,
    RoundRecord,
    RunRecord,
    ScoreMap,
    SegmentorCapabilities,
    SegQuery,
    ValidationResult,
    denormalize,
    validate_meta_query,
)
from .cassette import CassetteRecorder, record_bundle, replay_bundle
from .http_agents import HttpSegmenter, OpenAIChat
from .pipeline import run, run_no_cot

__version__ = "0.1.0"

__all__ = [
    "AgentBundle",
    "CassetteRecorder",
    "ChatRequest",
    "ChatResponse",
    "ChatTurn",
    "ControlAnnotation",
    "CoTTrace",
    "EvalVerdict",
    "HttpSegmenter",
    "ImageData",
    "LocalCorpusRetrieval",
    "MetaQuery",
    "OpenAIChat",
    "OracleSegmenter",
    "PipelineConfig",
    "RasterMask",
    "RetrievedContext",
    "RoundRecord",
    "RunRecord",
    "ScoreMap",
    "ScriptedChat",
    "SegmentorCapabilities",
    "SegQuery",
    "StubRetrieval",
    "ValidationResult",
    "denormalize",
    "record_bundle",
    "replay_bundle",
    "run",
    "run_no_cot",
    "validate_meta_query",
]
