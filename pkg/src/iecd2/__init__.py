"""Dual-stream contrastive decoding with divergence-gated geometric fusion."""

from .distributions import (
    LogitVector,
    TokenDistribution,
    VocabMap,
    smooth,
    softmax_with_temperature,
    top_k,
)
from .divergences import (
    DivergenceKind,
    bhattacharyya,
    divergence,
    forward_kl,
    hellinger,
    reverse_kl,
    symmetric_kl,
)
from .gating import GateParams, GateRecord, fuse, gate, step_fuse
from .decoding import (
    DecoderConfig,
    GateTrace,
    PromptPair,
    SingleStreamTrace,
    StepRecord,
    decode,
    decode_single_stream,
    read_gate_trace,
    render_prompt,
    write_gate_trace,
)
from .prompts import PROMPT_TEMPLATES, TASKS
from .backends import Stream

__version__ = "0.1.0"

__all__ = [
    "LogitVector",
    "TokenDistribution",
    "VocabMap",
    "smooth",
    "softmax_with_temperature",
    "top_k",
    "DivergenceKind",
    "bhattacharyya",
    "divergence",
    "forward_kl",
    "hellinger",
    "reverse_kl",
    "symmetric_kl",
    "GateParams",
    "GateRecord",
    "fuse",
    "gate",
    "step_fuse",
    "DecoderConfig",
    "GateTrace",
    "PromptPair",
    "SingleStreamTrace",
    "StepRecord",
    "decode",
    "decode_single_stream",
    "read_gate_trace",
    "render_prompt",
    "write_gate_trace",
    "PROMPT_TEMPLATES",
    "TASKS",
    "Stream",
    "__version__",
]
