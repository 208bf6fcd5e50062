"""Prompt template rendering and strict parsing of model free text.

Parsers are anchored-marker scanners: they look for the literal markers
the templates demand ("Question k:", "Answer k:", "Summary:", "Prompt:",
the <correctness>/<positive>/<negative>/<plabels>/<nlabels>/<choice> tag
pairs and their line-marker fallbacks) and tolerate drift in whitespace,
bullets, and line breaks around them. Render functions are pure; the
same inputs always produce byte-identical prompts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .core import (
    CoTTrace,
    EvalVerdict,
    ImageData,
    MetaQuery,
    SegQuery,
    SegmentorCapabilities,
    validate_meta_query,
)
from .errors import (
    EMPTY_OUTPUT,
    INCONSISTENT_VERDICT,
    MISSING_CHOICE_TAG,
    MISSING_CORRECTNESS_TAG,
    MISSING_PROMPT_LINE,
    MISSING_SUMMARY,
    ParseError,
)

REPAIR_NOTE = (
    "Your previous reply did not follow the required format. "
    "Please answer again and follow the required format exactly."
)

CHOICE_PREVIOUS = "previous"
CHOICE_REFINED = "refined"


@dataclass(frozen=True)
class PromptText:
    """Rendered prompt: system text plus ordered user turns of
    (text, attached images)."""

    system: str
    user_turns: tuple[tuple[str, tuple[ImageData, ...]], ...] = ()

    def __post_init__(self):
        if not self.system.strip():
            raise ParseError(EMPTY_OUTPUT, "system text must be non-empty")

    def all_text(self) -> str:
        return "\n".join([self.system, *(t for t, _ in self.user_turns)])


@dataclass(frozen=True)
class FirstTurnParse:
    trace: CoTTrace
    prompt_line: str
    labels: tuple[str, ...]


@lru_cache(maxsize=None)
def _load_template(name: str) -> str:
    return resources.files("cotseg.templates").joinpath(name).read_text(encoding="utf-8")


def describe_capabilities(caps: SegmentorCapabilities) -> str:
    """Render the capability descriptor into the sentence handed to the
    model."""
    kinds = ", ".join(caps.input_types)
    scores = "binary" if caps.score_semantics == "binary" else "soft values between 0 and 1"
    objects = "multiple objects" if caps.multi_object else "a single object"
    return (
        f"The segmentation model supports the following input types: {kinds}. "
        f"Its prediction scores are {scores}, and it can segment {objects} per request. "
        f"Segmentation model description: {caps.description}"
    )


def _fill(template: str, query_text: str, caps_text: str) -> str:
    return template.replace("{{CAPABILITIES}}", caps_text).replace("{{QUERY}}", query_text).strip()


def _query_text(query: SegQuery) -> str:
    if query.text.strip():
        return query.text
    assert query.control is not None
    return f"Segment the object indicated by the {query.control.kind} annotation."


def render_first_turn(
    query: SegQuery,
    caps: SegmentorCapabilities,
    retrieved=None,
    *,
    cot_rounds: int | None = None,
) -> PromptText:
    """First-turn prompt.

    cot_rounds selects the reasoning mode: None lets the model pick its
    own depth, 0 uses the direct no-reasoning template, and n > 0 demands
    exactly n question-answer pairs.
    """
    template = _load_template("no_cot.txt" if cot_rounds == 0 else "first_turn.txt")
    system = _fill(template, _query_text(query), describe_capabilities(caps))
    if cot_rounds is not None and cot_rounds > 0:
        system += f"\n\nFor this inference you must use exactly {cot_rounds} question-answer pairs."
    turns: list[tuple[str, tuple[ImageData, ...]]] = [("", ())]
    if retrieved is not None:
        turns.extend((snippet, ()) for snippet in retrieved.snippets)
        turns.extend(("", (img,)) for img in retrieved.images)
    return PromptText(system, tuple(turns))


def render_self_correction(query: SegQuery, caps: SegmentorCapabilities) -> PromptText:
    """Self-correction prompt; the caller attaches the original image and
    the masked composite as two image turns."""
    system = _fill(_load_template("self_correction.txt"), _query_text(query), describe_capabilities(caps))
    return PromptText(system)


def render_compare(query: SegQuery) -> PromptText:
    """A/B revert-judgment prompt; the caller attaches the two masked
    composites (A = previous, B = refined) as two image turns."""
    system = _fill(_load_template("compare.txt"), _query_text(query), "")
    return PromptText(system)


def render_keywords(query: SegQuery) -> PromptText:
    """Keyword-extraction prompt used before retrieval."""
    system = _fill(_load_template("keywords.txt"), _query_text(query), "")
    return PromptText(system)


def parse_labels(text: str) -> list[str]:
    """Split a period-separated detector label list.

    Total function: trims whitespace, preserves multi-word labels, drops
    empty segments; the literal "None" (optionally with a trailing
    period) yields the empty list.
    """
    stripped = text.strip()
    if stripped.rstrip(".").strip().lower() == "none":
        return []
    labels = []
    for segment in stripped.split("."):
        label = " ".join(segment.split())
        if label:
            labels.append(label)
    return labels


_QA_MARKER = re.compile(r"(?im)(question|answer)\s*(\d+)\s*:")
_SUMMARY_MARKER = re.compile(r"(?im)^[ \t]*(?:[-*]\s*)?summary\s*:", re.MULTILINE)
_PROMPT_MARKER = re.compile(r"(?im)^[ \t]*(?:[-*]\s*)?prompt\s*:[ \t]*", re.MULTILINE)
_LABELS_HEADER = re.compile(r"(?im)^[ \t]*(?:[-*]\s*)?labels\s*:[ \t]*", re.MULTILINE)


def _clean_span(text: str) -> str:
    out = text.strip()
    out = out.rstrip("-*• \t\r\n")
    return " ".join(out.split())


def parse_first_turn(text: str) -> FirstTurnParse:
    """Parse the first-turn reply into Q/A steps, summary, prompt line,
    and the trailing label list.

    Raises empty_output when the reply is blank, missing_prompt_line when
    no "Prompt:" marker exists, and missing_summary when Q/A steps are
    present without a "Summary:" paragraph.
    """
    if not text or not text.strip():
        raise ParseError(EMPTY_OUTPUT)

    prompt_matches = list(_PROMPT_MARKER.finditer(text))
    if not prompt_matches:
        raise ParseError(MISSING_PROMPT_LINE)
    prompt_match = prompt_matches[-1]
    line_end = text.find("\n", prompt_match.end())
    if line_end == -1:
        line_end = len(text)
    prompt_line = _clean_span(text[prompt_match.end():line_end])
    if not prompt_line:
        raise ParseError(MISSING_PROMPT_LINE, "empty prompt line")

    head = text[: prompt_match.start()]
    summary_match = _SUMMARY_MARKER.search(head)
    summary = _clean_span(head[summary_match.end():]) if summary_match else ""

    qa_region = head[: summary_match.start()] if summary_match else head
    markers = list(_QA_MARKER.finditer(qa_region))
    steps: list[tuple[str, str]] = []
    for i, m in enumerate(markers):
        if m.group(1).lower() != "question":
            continue
        if i + 1 >= len(markers) or markers[i + 1].group(1).lower() != "answer":
            continue
        ans = markers[i + 1]
        q_text = _clean_span(qa_region[m.end(): ans.start()])
        a_end = markers[i + 2].start() if i + 2 < len(markers) else len(qa_region)
        a_text = _clean_span(qa_region[ans.end(): a_end])
        if q_text and a_text:
            steps.append((q_text, a_text))

    if steps and not summary:
        raise ParseError(MISSING_SUMMARY)

    tail = text[line_end:]
    header = _LABELS_HEADER.search(tail)
    if header:
        tail = tail[header.end():]
    labels = tuple(parse_labels(tail)) if tail.strip() else ()

    return FirstTurnParse(CoTTrace(tuple(steps), summary), prompt_line, labels)


def _tag(text: str, name: str) -> str | None:
    m = re.search(rf"(?is)<{name}>(.*?)</{name}>", text)
    return m.group(1).strip() if m else None


def _directive_line(region: str, marker: str) -> str | None:
    m = re.search(rf"(?im)^[ \t]*(?:[-*]\s*)?(?:\d+\.\s*)?{marker}\s*:[ \t]*", region)
    if not m:
        return None
    rest = region[m.end():]
    stop = re.search(r"(?im)^[ \t]*(?:[-*]\s*)?(?:\d+\.\s*)?(?:positive|negative|labels|meta-queries)\s*:|<", rest)
    span = rest[: stop.start()] if stop else rest
    return _clean_span(span)


def _none_means_absent(value: str | None) -> str | None:
    if value is None:
        return None
    if value.rstrip(".").strip().lower() in ("", "none"):
        return None
    return value


def parse_self_correction(text: str, caps: SegmentorCapabilities) -> EvalVerdict:
    """Parse the evaluator reply into a verdict with optional refinement
    directives.

    Accepts both the tag grammar and the plain line-marker form the model
    tends to emit; "None" inside a directive means absent. The result
    always satisfies the verdict invariants or an error is raised.
    """
    if not text or not text.strip():
        raise ParseError(EMPTY_OUTPUT)

    tag_m = re.search(r"(?is)<correctness>\s*(true|false)\s*</correctness>", text)
    line_m = re.search(r"(?im)^[ \t]*(?:[-*]\s*)?correctness\s*:\s*(true|false)\b", text)
    marker = tag_m or line_m
    if marker is None:
        raise ParseError(MISSING_CORRECTNESS_TAG)
    correct = marker.group(1).strip().lower() == "true"

    # Reasoning is everything above the line carrying the verdict marker.
    cut = text.rfind("\n", 0, marker.start()) + 1
    reasoning = _clean_span(text[:cut])

    if correct:
        return EvalVerdict(reasoning, True)

    labels_header = _LABELS_HEADER.search(text, marker.end())
    directive_region = text[marker.end(): labels_header.start()] if labels_header else text[marker.end():]
    labels_region = text[labels_header.end():] if labels_header else ""

    pos_text = _none_means_absent(_tag(text, "positive") or _directive_line(directive_region, "positive"))
    neg_text = _none_means_absent(_tag(text, "negative") or _directive_line(directive_region, "negative"))
    plabels = _tag(text, "plabels")
    if plabels is None:
        plabels = _directive_line(labels_region, "positive")
    nlabels = _tag(text, "nlabels")
    if nlabels is None:
        nlabels = _directive_line(labels_region, "negative")

    if pos_text is None and neg_text is None:
        raise ParseError(INCONSISTENT_VERDICT, "correctness False but both directives are None")

    def directive(prompt: str | None, raw_labels: str | None) -> MetaQuery | None:
        if prompt is None:
            return None
        mq = MetaQuery("text", prompt=prompt, labels=tuple(parse_labels(raw_labels or "")))
        result = validate_meta_query(mq, caps)
        if not result:
            raise ParseError(result.reason or INCONSISTENT_VERDICT, "directive incompatible with segmenter")
        return mq

    return EvalVerdict(reasoning, False, directive(pos_text, plabels), directive(neg_text, nlabels))


def parse_compare(text: str) -> str:
    """Extract the A/B revert choice; A maps to "previous", B to
    "refined"."""
    choice = _tag(text or "", "choice")
    if choice is None or choice.strip().upper() not in ("A", "B"):
        raise ParseError(MISSING_CHOICE_TAG)
    return CHOICE_PREVIOUS if choice.strip().upper() == "A" else CHOICE_REFINED
