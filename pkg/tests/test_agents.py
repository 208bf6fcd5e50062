from __future__ import annotations

import numpy as np
import pytest

from cotseg.agents import (
    AgentBundle,
    ChatRequest,
    ChatTurn,
    LocalCorpusRetrieval,
    OracleSegmenter,
    RetrievedContext,
    ScriptedChat,
    StubRetrieval,
)
from cotseg.core import MetaQuery
from cotseg.errors import TransportError, ValidationError

from conftest import make_image, rect_mask


def user(text: str) -> ChatRequest:
    return ChatRequest((ChatTurn("user", text),))


class TestChatTypes:
    def test_request_needs_user_turn(self):
        with pytest.raises(ValidationError):
            ChatRequest((ChatTurn("system", "s"),))

    def test_images_only_on_user_turns(self):
        with pytest.raises(ValidationError):
            ChatTurn("system", "s", (make_image(2, 2),))

    def test_retrieved_context_never_empty(self):
        with pytest.raises(ValidationError):
            RetrievedContext()


class TestScriptedChat:
    def test_table_lookup(self):
        chat = ScriptedChat({"leash": "fixtureA"})
        assert chat.chat(user("please segment the leash")).text == "fixtureA"

    def test_insertion_order_wins(self):
        chat = ScriptedChat({"seg": "first", "segment": "second"})
        assert chat.chat(user("segment it")).text == "first"

    def test_queue_consumed_in_order(self):
        chat = ScriptedChat({"q": ["one", "two"]})
        assert chat.chat(user("q")).text == "one"
        assert chat.chat(user("q")).text == "two"
        with pytest.raises(TransportError):
            chat.chat(user("q"))

    def test_no_match_without_default(self):
        with pytest.raises(TransportError):
            ScriptedChat({"x": "y"}).chat(user("z"))

    def test_default(self):
        assert ScriptedChat({}, default="d").chat(user("anything")).text == "d"


class TestOracleSegmenter:
    def test_known_label_returns_binary_scores(self):
        image = make_image(6, 4)
        mask = rect_mask(6, 4, 1, 1, 3, 3)
        oracle = OracleSegmenter({"leash": mask})
        scores = oracle.segment(image, MetaQuery("text", prompt="p", labels=("leash",)))
        assert set(np.unique(scores.to_array())) <= {0.0, 1.0}
        assert (scores.to_array() > 0.5).tolist() == mask.to_array().tolist()

    def test_unknown_label_all_zero(self):
        image = make_image(4, 4)
        oracle = OracleSegmenter({"leash": rect_mask(4, 4, 0, 0, 1, 1)})
        assert oracle.segment(image, MetaQuery("text", prompt="p", labels=("sofa",))).to_array().sum() == 0

    def test_multi_label_union(self):
        image = make_image(4, 4)
        a = rect_mask(4, 4, 0, 0, 2, 4)
        b = rect_mask(4, 4, 2, 0, 4, 4)
        oracle = OracleSegmenter({"a": a, "b": b})
        scores = oracle.segment(image, MetaQuery("text", prompt="p", labels=("a", "b")))
        assert scores.to_array().sum() == 16

    def test_capability_descriptor(self):
        caps = OracleSegmenter({}).capabilities()
        assert caps.input_types == ("text",)
        assert caps.score_semantics == "binary"
        assert caps.multi_object is True

    def test_fixture_dimension_mismatch(self):
        oracle = OracleSegmenter({"x": rect_mask(3, 3, 0, 0, 1, 1)})
        with pytest.raises(ValidationError):
            oracle.segment(make_image(4, 4), MetaQuery("text", prompt="p", labels=("x",)))


class TestRetrieval:
    def test_local_corpus_lookup(self, tmp_path):
        (tmp_path / "hyloscirtus.txt").write_text("A stream frog species.", encoding="utf-8")
        ctx = LocalCorpusRetrieval(tmp_path).retrieve(["hyloscirtus"])
        assert ctx is not None and ctx.snippets == ("A stream frog species.",)

    def test_unknown_keyword_empty(self, tmp_path):
        assert LocalCorpusRetrieval(tmp_path).retrieve(["nothing"]) is None

    def test_keyword_order_preserved(self, tmp_path):
        (tmp_path / "beta.txt").write_text("B", encoding="utf-8")
        (tmp_path / "alpha.txt").write_text("A", encoding="utf-8")
        ctx = LocalCorpusRetrieval(tmp_path).retrieve(["beta", "alpha"])
        assert ctx.snippets == ("B", "A")

    def test_multiword_keyword_underscore_fallback(self, tmp_path):
        (tmp_path / "glass_frog.txt").write_text("see-through", encoding="utf-8")
        ctx = LocalCorpusRetrieval(tmp_path).retrieve(["Glass Frog"])
        assert ctx.snippets == ("see-through",)

    def test_image_file(self, tmp_path):
        img = make_image(4, 4, seed=8)
        (tmp_path / "frog.png").write_bytes(img.to_png())
        ctx = LocalCorpusRetrieval(tmp_path).retrieve(["frog"])
        assert ctx.images[0].width == 4

    def test_stub(self):
        assert StubRetrieval().retrieve(["anything"]) is None
