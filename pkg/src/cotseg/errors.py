"""Exception types and machine-readable reason codes."""

from __future__ import annotations

# Meta-query validation reason codes (also the HTTP 422 vocabulary).
UNSUPPORTED_INPUT_TYPE = "unsupported_input_type"
MISSING_COORDS = "missing_coords"
EMPTY_PROMPT = "empty_prompt"
UNEXPECTED_COORDS = "unexpected_coords"
OUT_OF_RANGE = "out_of_range"

# Free-text parsing reason codes.
MISSING_PROMPT_LINE = "missing_prompt_line"
EMPTY_OUTPUT = "empty_output"
MISSING_SUMMARY = "missing_summary"
MISSING_CORRECTNESS_TAG = "missing_correctness_tag"
INCONSISTENT_VERDICT = "inconsistent_verdict"
MISSING_CHOICE_TAG = "missing_choice_tag"

# Raster / dataset reason codes.
DIMENSION_MISMATCH = "dimension_mismatch"
DEGENERATE_POLYGON = "degenerate_polygon"
INVALID_RESPONSE_SHAPE = "invalid_response_shape"
MALFORMED_JSON = "malformed_json"
MISSING_IMAGE = "missing_image"
EMPTY_DATASET = "empty_dataset"


class CotsegError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CotsegError):
    """A domain-type invariant was violated at construction or use."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ParseError(CotsegError):
    """Model free-text output did not follow the required format."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class TransportError(CotsegError):
    """An agent backend failed at the transport level."""


class MetaQueryRejected(CotsegError):
    """A segmenter backend refused the meta-query (HTTP 422)."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class CassetteMismatchError(CotsegError):
    """Replay request does not match the next recorded interaction."""


class DatasetError(CotsegError):
    """Benchmark dataset is missing, empty, or malformed."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)
