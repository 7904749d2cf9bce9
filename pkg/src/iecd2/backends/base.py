"""Backend contract: anything that can run the two conditional streams.

A backend owns a vocabulary and opens stream sessions. A session is
positioned after its prompt, accumulates generated history append-only,
and yields next-token logits conditioned on prompt plus history. A
backend may be shared across threads; each session belongs to one
thread at a time.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from typing import Sequence, Union

from ..distributions import LogitVector, VocabMap
from ..errors import InputError

Prompt = Union[str, Sequence[int]]


class Stream(enum.Enum):
    INSTRUCTION = "instruction"
    EVIDENCE = "evidence"


class StreamSession(ABC):
    """One conditional decoding stream over a backend."""

    stream: Stream
    prompt_tokens: tuple[int, ...]

    def __init__(self, stream: Stream, prompt_tokens: Sequence[int]):
        self.stream = stream
        self.prompt_tokens = tuple(prompt_tokens)
        self._history: list[int] = []

    @property
    def history(self) -> tuple[int, ...]:
        return tuple(self._history)

    @property
    def off_trace(self) -> bool:
        """True when the session's conditioning no longer matches a recording."""
        return False

    @abstractmethod
    def next_logits(self) -> LogitVector:
        """Logits for the next token given prompt plus full history."""

    @abstractmethod
    def append_token(self, token_id: int) -> None:
        """Extend the history; subsequent logits reflect the new context."""


class Backend(ABC):
    """Factory for stream sessions over one vocabulary."""

    @property
    @abstractmethod
    def vocab(self) -> VocabMap:
        ...

    @abstractmethod
    def open_session(
        self,
        prompt: Prompt,
        image_ref: str,
        stream: Stream | None = None,
    ) -> StreamSession:
        """Open a session positioned after the prompt, with empty history.

        String prompts are interpreted by the backend (that is where the
        two streams' conditioning comes from); explicit token sequences
        are taken as-is. ``stream`` overrides the backend's own
        classification of the prompt when given.
        """

    def _check_token_prompt(self, prompt: Sequence[int]) -> tuple[int, ...]:
        tokens = tuple(int(t) for t in prompt)
        if not tokens:
            raise InputError("prompt must be non-empty")
        v = len(self.vocab)
        for t in tokens:
            if not 0 <= t < v:
                raise InputError(f"prompt token id {t} out of range for vocab {v}")
        return tokens
