import pytest

from iecd2 import PromptPair, render_prompt
from iecd2.errors import InputError
from iecd2.prompts import PROMPT_TEMPLATES


class TestTemplates:
    def test_caption_instruction_bytes(self):
        assert render_prompt("caption.instruction") == (
            "Describe the image in detail.\nCaption:"
        )

    def test_caption_evidence_bytes(self):
        assert render_prompt("caption.evidence") == (
            "Describe ONLY what is clearly visible in the image. Do not guess.\n"
            "Caption:"
        )

    def test_yesno_instruction_bytes(self):
        assert render_prompt("yesno.instruction", "Is there a dog?") == (
            "Answer the question based on the image. Answer only yes or no.\n"
            "\n"
            "Question: Is there a dog?\n"
            "Answer:"
        )

    def test_yesno_evidence_contains_required_phrases(self):
        rendered = render_prompt("yesno.evidence", "Is there a cat?")
        assert "Do not guess. Answer only yes or no." in rendered
        assert "Is there a cat?" in rendered
        assert rendered == (
            "Answer the question using only visible evidence in the image.\n"
            "Do not guess. Answer only yes or no.\n"
            "\n"
            "Question: Is there a cat?\n"
            "Answer:"
        )

    def test_openqa_instruction_bytes(self):
        assert render_prompt("openqa.instruction", "What color is the car?") == (
            "Answer the visual question briefly.\n"
            "\n"
            "Question: What color is the car?\n"
            "Answer:"
        )

    def test_openqa_evidence_contains_do_not_assume(self):
        rendered = render_prompt("openqa.evidence", "What is on the table?")
        assert "Do not assume anything." in rendered
        assert rendered == (
            "Answer ONLY using visible information from the image.\n"
            "Do not assume anything.\n"
            "\n"
            "Question: What is on the table?\n"
            "Answer:"
        )

    def test_registry_has_all_six_pairs(self):
        assert set(PROMPT_TEMPLATES) == {
            "caption.instruction", "caption.evidence",
            "yesno.instruction", "yesno.evidence",
            "openqa.instruction", "openqa.evidence",
        }


class TestRenderErrors:
    def test_unknown_template(self):
        with pytest.raises(InputError):
            render_prompt("caption.helpful")

    def test_missing_question(self):
        with pytest.raises(InputError):
            render_prompt("yesno.instruction")
        with pytest.raises(InputError):
            render_prompt("openqa.evidence")

    def test_question_ignored_for_caption(self):
        assert render_prompt("caption.instruction", "unused") == (
            "Describe the image in detail.\nCaption:"
        )


class TestPromptPair:
    def test_from_registry(self):
        pair = PromptPair.from_registry("caption")
        assert pair.template_id == "caption"
        assert pair.instruction_prompt == PROMPT_TEMPLATES["caption.instruction"]
        assert pair.evidence_prompt == PROMPT_TEMPLATES["caption.evidence"]

    def test_empty_prompt_rejected(self):
        with pytest.raises(InputError):
            PromptPair("", "x")
        with pytest.raises(InputError):
            PromptPair("x", "")

    def test_digest_depends_on_both_prompts(self):
        a = PromptPair("one", "two")
        b = PromptPair("one", "three")
        c = PromptPair("one", "two")
        assert a.digest() != b.digest()
        assert a.digest() == c.digest()
