from .base import Backend, Prompt, Stream, StreamSession
from .toy import (
    EVIDENCE_MARKERS,
    START_TOKEN,
    ToyBackend,
    ToyScene,
    ToySession,
    classify_prompt,
    default_vocab,
    generate_toy_corpus,
    load_toy_corpus,
    save_toy_corpus,
)
from .trace import (
    TRACE_VERSION,
    LogitTrace,
    TraceBackend,
    TraceSession,
    TraceStep,
    make_random_trace,
    read_trace,
    write_trace,
)

__all__ = [
    "Backend",
    "Prompt",
    "Stream",
    "StreamSession",
    "EVIDENCE_MARKERS",
    "START_TOKEN",
    "ToyBackend",
    "ToyScene",
    "ToySession",
    "classify_prompt",
    "default_vocab",
    "generate_toy_corpus",
    "load_toy_corpus",
    "save_toy_corpus",
    "TRACE_VERSION",
    "LogitTrace",
    "TraceBackend",
    "TraceSession",
    "TraceStep",
    "make_random_trace",
    "read_trace",
    "write_trace",
]
