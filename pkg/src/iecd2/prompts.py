"""Registry of the paired instruction and evidence prompt templates.

The instruction wording asks for a normal helpful answer; the evidence
wording pins the model to what is visibly present. Templates with a
"{question}" slot require a question at render time. The strings are
fixed verbatim: exporters and the engine must agree byte-for-byte.
"""

from __future__ import annotations

from .errors import InputError

PROMPT_TEMPLATES: dict[str, str] = {
    "caption.instruction": "Describe the image in detail.\nCaption:",
    "caption.evidence": (
        "Describe ONLY what is clearly visible in the image. Do not guess.\n"
        "Caption:"
    ),
    "yesno.instruction": (
        "Answer the question based on the image. Answer only yes or no.\n"
        "\n"
        "Question: {question}\n"
        "Answer:"
    ),
    "yesno.evidence": (
        "Answer the question using only visible evidence in the image.\n"
        "Do not guess. Answer only yes or no.\n"
        "\n"
        "Question: {question}\n"
        "Answer:"
    ),
    "openqa.instruction": (
        "Answer the visual question briefly.\n"
        "\n"
        "Question: {question}\n"
        "Answer:"
    ),
    "openqa.evidence": (
        "Answer ONLY using visible information from the image.\n"
        "Do not assume anything.\n"
        "\n"
        "Question: {question}\n"
        "Answer:"
    ),
}

TASKS = ("caption", "yesno", "openqa")


def render_prompt(template_id: str, question: str | None = None) -> str:
    """Instantiate a registry template, substituting the question slot."""
    try:
        template = PROMPT_TEMPLATES[template_id]
    except KeyError:
        raise InputError(
            f"unknown prompt template {template_id!r}; "
            f"known: {', '.join(sorted(PROMPT_TEMPLATES))}"
        ) from None
    if "{question}" in template:
        if question is None:
            raise InputError(f"template {template_id!r} requires a question")
        return template.replace("{question}", question)
    return template
