from __future__ import annotations

import numpy as np
import pytest

from cotseg import errors, protocol
from cotseg.agents import RetrievedContext
from cotseg.core import MetaQuery, SegmentorCapabilities, SegQuery
from cotseg.errors import ParseError

from conftest import make_image, transcript

CAPS_TEXT = SegmentorCapabilities(("text",), "binary", True, "oracle test backend")
CAPS_ALL = SegmentorCapabilities(("text", "points", "box", "scribble"), "soft", False, "full backend")

FIRST_SENTENCE = "You will serve as an agent for language-based image segmentation model"

DOG_PROMPT_LINE = (
    "The image shows a person standing on grass with a dog. "
    "Please segment the leash located at the upper left part of the image."
)
PAGURIAN_POSITIVE = (
    "Please also segment the shell of the Pagurian, "
    "located at the center-right of the original image."
)


class TestRenderFirstTurn:
    def test_template_sentence_then_query(self):
        prompt = protocol.render_first_turn(SegQuery("the leash"), CAPS_TEXT)
        text = prompt.all_text()
        assert FIRST_SENTENCE in text
        assert text.index(FIRST_SENTENCE) < text.index("the leash")

    def test_empty_retrieval_is_identity(self):
        a = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT)
        b = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT, retrieved=None)
        assert a == b

    def test_retrieval_snippet_becomes_extra_turn(self):
        ctx = RetrievedContext(snippets=("A glass frog with green spots.",))
        prompt = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT, retrieved=ctx)
        assert ("A glass frog with green spots.", ()) in prompt.user_turns

    def test_retrieval_image_becomes_extra_turn(self):
        img = make_image(4, 4)
        prompt = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT, retrieved=RetrievedContext(images=(img,)))
        assert prompt.user_turns[-1][1] == (img,)

    def test_capability_sentence_names_only_supported_types(self):
        only_text = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT).system
        assert "points" not in only_text and "scribble" not in only_text
        full = protocol.render_first_turn(SegQuery("q"), CAPS_ALL).system
        for kind in ("text", "points", "box", "scribble"):
            assert kind in full

    def test_fixed_length_instruction(self):
        prompt = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT, cot_rounds=4)
        assert "exactly 4 question-answer pairs" in prompt.system

    def test_no_cot_template_drops_qa_format(self):
        prompt = protocol.render_first_turn(SegQuery("q"), CAPS_TEXT, cot_rounds=0)
        assert "Question 1" not in prompt.system
        assert "Prompt: The image shows" in prompt.system

    def test_render_is_pure(self):
        assert protocol.render_first_turn(SegQuery("q"), CAPS_ALL) == protocol.render_first_turn(SegQuery("q"), CAPS_ALL)


class TestParseFirstTurn:
    def test_dog_transcript_exact(self):
        parsed = protocol.parse_first_turn(transcript("dog_first_turn.txt"))
        assert len(parsed.trace.steps) == 4
        assert parsed.trace.steps[0] == (
            "What is the overall setting of the image?",
            "The image shows a person standing on grass, with a dog in the foreground.",
        )
        assert parsed.trace.steps[3] == (
            "Where is the object of interest located in the image?",
            "The leash is located in the upper left part of the image, extending from the person's hand to the dog.",
        )
        assert parsed.trace.summary.startswith("The image shows a person standing on grass with a dog.")
        assert parsed.prompt_line == DOG_PROMPT_LINE
        assert parsed.labels == ()  # sample carries no label list: fell back

    def test_single_line_qa_pairs(self):
        text = "- Question 1: What is shown? - Answer 1: A cat.\nSummary: A cat sits.\nPrompt: The image shows a cat. Please segment the cat located at the center of the image.\ncat.\n"
        parsed = protocol.parse_first_turn(text)
        assert parsed.trace.steps == (("What is shown?", "A cat."),)
        assert parsed.labels == ("cat",)

    def test_prompt_line_without_questions(self):
        parsed = protocol.parse_first_turn("Prompt: The image shows a room. Please segment the sofa located at the left of the image.")
        assert parsed.trace.steps == ()
        assert parsed.prompt_line.startswith("The image shows a room.")

    def test_missing_prompt_line(self):
        with pytest.raises(ParseError) as err:
            protocol.parse_first_turn("Summary: nothing useful here")
        assert err.value.reason == errors.MISSING_PROMPT_LINE

    def test_empty_output(self):
        with pytest.raises(ParseError) as err:
            protocol.parse_first_turn("   \n ")
        assert err.value.reason == errors.EMPTY_OUTPUT

    def test_steps_without_summary(self):
        text = "- Question 1: A? - Answer 1: B.\nPrompt: The image shows X. Please segment the X located at the left of the image."
        with pytest.raises(ParseError) as err:
            protocol.parse_first_turn(text)
        assert err.value.reason == errors.MISSING_SUMMARY

    def test_labels_header_variant(self):
        text = "Prompt: The image shows a cat. Please segment the cat located at the center of the image.\nLabels: cat. remote control.\n"
        assert protocol.parse_first_turn(text).labels == ("cat", "remote control")


class TestParseLabels:
    def test_three_labels(self):
        assert protocol.parse_labels("cat. remote control. television.") == ["cat", "remote control", "television"]

    def test_none_token(self):
        assert protocol.parse_labels("None.") == []
        assert protocol.parse_labels("none") == []

    def test_single_bare_label(self):
        assert protocol.parse_labels("shell") == ["shell"]

    def test_round_trip_property(self):
        rng = np.random.default_rng(43)
        words = ["cat", "remote", "control", "glass", "frog", "leash", "shell", "tv"]
        for _ in range(200):
            n = int(rng.integers(1, 6))
            labels = []
            for _ in range(n):
                k = int(rng.integers(1, 4))
                label = " ".join(rng.choice(words) for _ in range(k))
                if label.lower() != "none":
                    labels.append(label)
            if not labels:
                continue
            joined = ". ".join(labels) + "."
            assert protocol.parse_labels(joined) == labels


class TestSelfCorrection:
    def test_render_contains_tag_grammar(self):
        text = protocol.render_self_correction(SegQuery("q"), CAPS_TEXT).system
        for tag in ("<correctness>", "<positive>", "<negative>", "<plabels>", "<nlabels>"):
            assert tag in text

    def test_render_capability_echo(self):
        text = protocol.render_self_correction(SegQuery("q"), CAPS_TEXT).system
        assert "input types: text." in text

    def test_pagurian_transcript_exact(self):
        verdict = protocol.parse_self_correction(transcript("pagurian_self_correction.txt"), CAPS_TEXT)
        assert verdict.correct is False
        assert verdict.positive is not None
        assert verdict.positive.prompt == PAGURIAN_POSITIVE
        assert verdict.positive.labels == ("shell",)
        assert verdict.negative is None

    def test_dog_self_correction_exact(self):
        verdict = protocol.parse_self_correction(transcript("dog_self_correction.txt"), CAPS_TEXT)
        assert verdict.correct is False
        assert verdict.positive.prompt == "Please also segment the entire leash, located at the upper left part of the original image."
        assert verdict.positive.labels == ("leash",)
        assert verdict.negative.prompt == "Please remove the person's clothing, located at the upper right part of the segmentation image."
        assert verdict.negative.labels == ("person's clothing",)

    def test_tagged_true(self):
        verdict = protocol.parse_self_correction("<correctness>True</correctness>", CAPS_TEXT)
        assert verdict.correct is True and verdict.positive is None and verdict.negative is None

    def test_tagged_false_with_tagged_directives(self):
        text = (
            "<correctness>False</correctness>\n"
            "<positive>Please also segment the shell, located at the right of the original image.</positive>\n"
            "<negative>None</negative>\n"
            "<plabels>shell.</plabels>\n<nlabels>None.</nlabels>"
        )
        verdict = protocol.parse_self_correction(text, CAPS_TEXT)
        assert verdict.positive.labels == ("shell",) and verdict.negative is None

    def test_false_with_no_directives_is_inconsistent(self):
        with pytest.raises(ParseError) as err:
            protocol.parse_self_correction(
                "<correctness>False</correctness> <positive>None</positive> <negative>None</negative>", CAPS_TEXT
            )
        assert err.value.reason == errors.INCONSISTENT_VERDICT

    def test_missing_correctness(self):
        with pytest.raises(ParseError) as err:
            protocol.parse_self_correction("the mask looks fine to me", CAPS_TEXT)
        assert err.value.reason == errors.MISSING_CORRECTNESS_TAG

    def test_true_discards_directives(self):
        text = "- Correctness: True\n- Meta-queries (Output if the correctness is false):\nPositive: Please also segment the thing.\n"
        verdict = protocol.parse_self_correction(text, CAPS_TEXT)
        assert verdict.correct is True and verdict.positive is None

    def test_fuzz_never_inconsistent(self):
        rng = np.random.default_rng(47)
        fragments = [
            "- Correctness: True", "- Correctness: False", "<correctness>False</correctness>",
            "Positive: Please also segment the lid.", "Negative: None", "- Labels:",
            "Positive: lid.", "Negative: None.", "random prose here",
        ]
        for _ in range(200):
            n = int(rng.integers(1, 6))
            text = "\n".join(str(rng.choice(fragments)) for _ in range(n))
            try:
                verdict = protocol.parse_self_correction(text, CAPS_TEXT)
            except ParseError:
                continue
            if verdict.correct:
                assert verdict.positive is None and verdict.negative is None
            else:
                assert verdict.positive is not None or verdict.negative is not None


class TestCompare:
    def test_render_demands_single_tag(self):
        text = protocol.render_compare(SegQuery("q")).system
        assert "<choice>A</choice>" in text and "<choice>B</choice>" in text

    def test_choice_a(self):
        assert protocol.parse_compare("<choice>A</choice>") == protocol.CHOICE_PREVIOUS

    def test_choice_b(self):
        assert protocol.parse_compare("<choice>B</choice>") == protocol.CHOICE_REFINED

    def test_tag_amid_prose(self):
        assert protocol.parse_compare("I think B is better. <choice>B</choice>") == protocol.CHOICE_REFINED

    def test_missing_tag(self):
        with pytest.raises(ParseError) as err:
            protocol.parse_compare("definitely the second one")
        assert err.value.reason == errors.MISSING_CHOICE_TAG


def test_directive_validation_respects_caps():
    points_only = SegmentorCapabilities(("points",), "binary", True, "points backend")
    with pytest.raises(ParseError):
        protocol.parse_self_correction(transcript("pagurian_self_correction.txt"), points_only)


def test_parse_labels_total_on_junk():
    assert protocol.parse_labels("") == []
    assert protocol.parse_labels("...") == []
    assert protocol.parse_labels(" a .  b  c .") == ["a", "b c"]
