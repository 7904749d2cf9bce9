"""Serialized dual-stream logit traces and their replay backend.

A trace file bridges real models to this engine: an exporter dumps the
raw per-step logits of both streams, and the replay backend feeds them
back so any decoding configuration can be re-run offline. Layout: one
JSON header line, then one record per step, either as JSON lines
("text" format) or as length-prefixed little-endian float64 blocks
("binary" format, for large vocabularies).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import json

import numpy as np

from ..distributions import LogitVector, VocabMap
from ..errors import EndOfTraceError, InputError, TraceFormatError
from .base import Backend, Prompt, Stream, StreamSession

logger = logging.getLogger(__name__)

TRACE_VERSION = 1
_FORMATS = ("text", "binary")


@dataclass
class TraceStep:
    instruction_logits: np.ndarray
    evidence_logits: np.ndarray
    source_token: int

    def __post_init__(self):
        self.instruction_logits = np.asarray(self.instruction_logits, dtype=np.float64)
        self.evidence_logits = np.asarray(self.evidence_logits, dtype=np.float64)
        self.source_token = int(self.source_token)


@dataclass
class LogitTrace:
    version: int
    vocab: VocabMap
    instruction_prompt: str
    evidence_prompt: str
    steps: list[TraceStep] = field(default_factory=list)

    def __post_init__(self):
        if self.version != TRACE_VERSION:
            raise TraceFormatError(f"unsupported trace version {self.version}")
        v = len(self.vocab)
        # validate once here so replay sessions can hand rows out untouched
        for i, step in enumerate(self.steps):
            if step.instruction_logits.shape != (v,) or step.evidence_logits.shape != (v,):
                raise TraceFormatError(
                    f"step {i}: logit vectors must have length {v}", step=i
                )
            if not (np.all(np.isfinite(step.instruction_logits))
                    and np.all(np.isfinite(step.evidence_logits))):
                raise TraceFormatError(
                    f"step {i}: logits must be finite", step=i
                )


def write_trace(trace: LogitTrace, path: str | Path, fmt: str = "binary") -> None:
    if fmt not in _FORMATS:
        raise InputError(f"unknown trace format {fmt!r}; expected one of {_FORMATS}")
    header = {
        "version": trace.version,
        "format": fmt,
        "vocab": list(trace.vocab.tokens),
        "instruction_prompt": trace.instruction_prompt,
        "evidence_prompt": trace.evidence_prompt,
        "steps": len(trace.steps),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        if fmt == "text":
            for step in trace.steps:
                rec = {
                    "il": step.instruction_logits.tolist(),
                    "el": step.evidence_logits.tolist(),
                    "src": step.source_token,
                }
                fh.write(json.dumps(rec).encode("utf-8") + b"\n")
        else:
            for step in trace.steps:
                payload = (
                    step.instruction_logits.tobytes()
                    + step.evidence_logits.tobytes()
                    + struct.pack("<I", step.source_token)
                )
                fh.write(struct.pack("<I", len(payload)))
                fh.write(payload)


def _parse_header(line: bytes, path) -> dict:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TraceFormatError(f"unreadable trace header in {path}: {e}") from e
    for key in ("version", "format", "vocab", "instruction_prompt",
                "evidence_prompt", "steps"):
        if key not in header:
            raise TraceFormatError(f"trace header missing field {key!r}")
    if header["version"] != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {header['version']}")
    if header["format"] not in _FORMATS:
        raise TraceFormatError(f"unknown trace format {header['format']!r}")
    return header


def _read_text_step(fh, index: int, v: int) -> TraceStep:
    line = fh.readline()
    if not line:
        raise TraceFormatError(f"trace truncated at step {index}", step=index)
    try:
        rec = json.loads(line.decode("utf-8"))
        il, el, src = rec["il"], rec["el"], rec["src"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise TraceFormatError(f"malformed record at step {index}: {e}", step=index) from e
    if len(il) != v or len(el) != v:
        raise TraceFormatError(
            f"step {index}: expected {v} logits per stream, got {len(il)}/{len(el)}",
            step=index,
        )
    return TraceStep(np.array(il, dtype=np.float64), np.array(el, dtype=np.float64), src)


def _read_binary_step(fh, index: int, v: int) -> TraceStep:
    prefix = fh.read(4)
    if len(prefix) < 4:
        raise TraceFormatError(f"trace truncated at step {index}", step=index)
    (length,) = struct.unpack("<I", prefix)
    expected = 16 * v + 4
    if length != expected:
        raise TraceFormatError(
            f"step {index}: record length {length}, expected {expected}", step=index
        )
    payload = fh.read(length)
    if len(payload) < length:
        raise TraceFormatError(f"trace truncated at step {index}", step=index)
    il = np.frombuffer(payload, dtype="<f8", count=v, offset=0).astype(np.float64)
    el = np.frombuffer(payload, dtype="<f8", count=v, offset=8 * v).astype(np.float64)
    (src,) = struct.unpack_from("<I", payload, 16 * v)
    return TraceStep(il, el, src)


def read_trace(path: str | Path) -> LogitTrace:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _parse_header(fh.readline(), path)
        vocab = VocabMap(tuple(header["vocab"]))
        v = len(vocab)
        reader = _read_text_step if header["format"] == "text" else _read_binary_step
        steps = [reader(fh, i, v) for i in range(int(header["steps"]))]
    return LogitTrace(
        version=header["version"],
        vocab=vocab,
        instruction_prompt=header["instruction_prompt"],
        evidence_prompt=header["evidence_prompt"],
        steps=steps,
    )


class TraceSession(StreamSession):
    """Replays one stream's recorded logits; position equals history length."""

    def __init__(self, trace: LogitTrace, stream: Stream, prompt_tokens):
        super().__init__(stream, prompt_tokens)
        self._trace = trace
        self._off_trace = False

    @property
    def off_trace(self) -> bool:
        return self._off_trace

    def next_logits(self) -> LogitVector:
        t = len(self._history)
        if t >= len(self._trace.steps):
            raise EndOfTraceError(
                f"trace exhausted: step {t} of {len(self._trace.steps)} recorded"
            )
        step = self._trace.steps[t]
        if self.stream is Stream.INSTRUCTION:
            return LogitVector._trusted(step.instruction_logits)
        return LogitVector._trusted(step.evidence_logits)

    def append_token(self, token_id: int) -> None:
        token_id = int(token_id)
        if not 0 <= token_id < len(self._trace.vocab):
            raise InputError(f"token id {token_id} out of range")
        t = len(self._history)
        if (not self._off_trace and t < len(self._trace.steps)
                and token_id != self._trace.steps[t].source_token):
            self._off_trace = True
            logger.debug(
                "replay diverged at step %d: chose %d, recording had %d",
                t, token_id, self._trace.steps[t].source_token,
            )
        self._history.append(token_id)


class TraceBackend(Backend):
    def __init__(self, trace: LogitTrace):
        self._trace = trace

    @classmethod
    def from_file(cls, path: str | Path) -> "TraceBackend":
        return cls(read_trace(path))

    @property
    def vocab(self) -> VocabMap:
        return self._trace.vocab

    @property
    def trace(self) -> LogitTrace:
        return self._trace

    def open_session(
        self,
        prompt: Prompt,
        image_ref: str,
        stream: Stream | None = None,
    ) -> TraceSession:
        # image_ref is ignored: the recording already fixes the image.
        if isinstance(prompt, str):
            if not prompt:
                raise InputError("prompt must be non-empty")
            tokens = (0,)
            if stream is None:
                if prompt == self._trace.instruction_prompt:
                    stream = Stream.INSTRUCTION
                elif prompt == self._trace.evidence_prompt:
                    stream = Stream.EVIDENCE
                else:
                    raise InputError(
                        "prompt matches neither recorded prompt; pass stream explicitly"
                    )
        else:
            tokens = self._check_token_prompt(prompt)
            if stream is None:
                stream = Stream.INSTRUCTION
        return TraceSession(self._trace, stream, tokens)


def make_random_trace(
    vocab_size: int,
    n_steps: int,
    seed: int = 0,
    scale: float = 2.0,
) -> LogitTrace:
    """Synthetic trace with Gaussian logits; used by benchmarks and tests."""
    rng = np.random.default_rng(seed)
    vocab = VocabMap(tuple(f"v{i}" for i in range(vocab_size)))
    steps = [
        TraceStep(
            rng.normal(0.0, scale, vocab_size),
            rng.normal(0.0, scale, vocab_size),
            int(rng.integers(0, vocab_size)),
        )
        for _ in range(n_steps)
    ]
    return LogitTrace(
        version=TRACE_VERSION,
        vocab=vocab,
        instruction_prompt="Describe the image in detail.\nCaption:",
        evidence_prompt="Describe ONLY what is clearly visible in the image. Do not guess.\nCaption:",
        steps=steps,
    )
