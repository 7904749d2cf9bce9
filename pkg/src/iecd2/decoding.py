"""The dual-stream decoding loop.

Per step: pull logits from both sessions, apply each stream's
temperature, smooth, measure disagreement, gate, fuse, pick a token,
and append that same token to both sessions so the streams share one
history. Every decode emits a full gate trace; it is cheap next to the
backend calls and all evaluation consumes it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends.base import Backend, Stream
from .distributions import TokenDistribution, smooth, softmax_with_temperature, top_k
from .divergences import DEFAULT_DIVERGENCE, DivergenceKind
from .errors import ConfigurationError, IECD2Error, InputError
from .gating import GateParams, GateRecord, step_fuse
from .prompts import render_prompt  # noqa: F401  (decode-facing re-export)

TOP_K_RECORDED = 8

_PROFILE_LIMITS = {"vqa": (3, 16), "caption": (20, 64)}
_PROFILE_DEFAULT_LENGTH = {"vqa": 16, "caption": 64, "custom": 32}


@dataclass
class DecoderConfig:
    """Everything one decode run depends on.

    Temperatures shape each stream before smoothing; eta and the
    divergence kind drive the gate; the task profile constrains decode
    length (questions need a few tokens, captions need room).
    """

    eta: float = -3.0
    t_instruction: float = 1.0
    t_evidence: float = 0.9
    divergence_kind: DivergenceKind = DEFAULT_DIVERGENCE
    eps: float = 1e-8
    max_tokens: int | None = None
    min_tokens: int = 0
    stop_tokens: frozenset[int] = frozenset()
    selection: str = "greedy"
    sample_temperature: float = 1.0
    seed: int = 0
    task_profile: str = "custom"
    allow_unsafe_eta: bool = False

    def __post_init__(self):
        if self.task_profile not in _PROFILE_DEFAULT_LENGTH:
            raise ConfigurationError(
                f"unknown task profile {self.task_profile!r}"
            )
        if self.max_tokens is None:
            self.max_tokens = _PROFILE_DEFAULT_LENGTH[self.task_profile]
        for name, value in (("t_instruction", self.t_instruction),
                            ("t_evidence", self.t_evidence),
                            ("sample_temperature", self.sample_temperature)):
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if not (isinstance(self.eps, float) and 0 < self.eps < 1):
            raise ConfigurationError(f"eps must lie in (0, 1), got {self.eps}")
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be positive")
        if not 0 <= self.min_tokens <= self.max_tokens:
            raise ConfigurationError("min_tokens must lie in [0, max_tokens]")
        limits = _PROFILE_LIMITS.get(self.task_profile)
        if limits and not limits[0] <= self.max_tokens <= limits[1]:
            raise ConfigurationError(
                f"profile {self.task_profile!r} requires max_tokens in "
                f"[{limits[0]}, {limits[1]}], got {self.max_tokens}"
            )
        if self.selection not in ("greedy", "sample"):
            raise ConfigurationError(
                f"selection must be 'greedy' or 'sample', got {self.selection!r}"
            )
        self.stop_tokens = frozenset(int(t) for t in self.stop_tokens)
        # Validates eta against the suppressing-regime guard.
        self.gate_params()

    def gate_params(self) -> GateParams:
        return GateParams(self.eta, self.divergence_kind, self.allow_unsafe_eta)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "t_instruction": self.t_instruction,
            "t_evidence": self.t_evidence,
            "divergence_kind": self.divergence_kind.value,
            "eps": self.eps,
            "max_tokens": self.max_tokens,
            "min_tokens": self.min_tokens,
            "stop_tokens": sorted(self.stop_tokens),
            "selection": self.selection,
            "sample_temperature": self.sample_temperature,
            "seed": self.seed,
            "task_profile": self.task_profile,
            "allow_unsafe_eta": self.allow_unsafe_eta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecoderConfig":
        data = dict(data)
        if "divergence_kind" in data and isinstance(data["divergence_kind"], str):
            data["divergence_kind"] = DivergenceKind.from_name(data["divergence_kind"])
        if "stop_tokens" in data:
            data["stop_tokens"] = frozenset(data["stop_tokens"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown decoder config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class PromptPair:
    instruction_prompt: str
    evidence_prompt: str
    template_id: str | None = None

    def __post_init__(self):
        if not self.instruction_prompt or not self.evidence_prompt:
            raise InputError("both prompts must be non-empty")

    @classmethod
    def from_registry(cls, task: str, question: str | None = None) -> "PromptPair":
        return cls(
            instruction_prompt=render_prompt(f"{task}.instruction", question),
            evidence_prompt=render_prompt(f"{task}.evidence", question),
            template_id=task,
        )

    def digest(self) -> str:
        payload = self.instruction_prompt + "\x1f" + self.evidence_prompt
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class StepRecord:
    gate: GateRecord
    token: int
    instruction_top: tuple[tuple[int, float], ...]
    evidence_top: tuple[tuple[int, float], ...]
    off_trace: bool
    chosen_log_prob: float


@dataclass
class GateTrace:
    records: list[StepRecord] = field(default_factory=list)
    config: DecoderConfig | None = None
    prompt_digest: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def mean_divergence(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.gate.divergence_value for r in self.records) / len(self.records)

    def mean_gate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.gate.gate_value for r in self.records) / len(self.records)


@dataclass
class SingleStepRecord:
    step: int
    token: int
    top: tuple[tuple[int, float], ...]
    off_trace: bool
    chosen_log_prob: float


@dataclass
class SingleStreamTrace:
    records: list[SingleStepRecord] = field(default_factory=list)
    config: DecoderConfig | None = None
    prompt_digest: str = ""


def _select_token(fused: TokenDistribution, config: DecoderConfig,
                  rng: np.random.Generator | None) -> int:
    if config.selection == "greedy":
        # argmax returns the first maximum, which is the lowest id.
        return int(np.argmax(fused.log_probs))
    p = fused.probs
    if config.sample_temperature != 1.0:
        lp = fused.log_probs / config.sample_temperature
        lp = lp - lp.max()
        p = np.exp(lp)
        p = p / p.sum()
    return int(rng.choice(p.shape[0], p=p))


def _step_context(exc: IECD2Error, step: int) -> IECD2Error:
    exc.args = (f"decode step {step}: {exc.args[0] if exc.args else exc}",)
    return exc


def decode(
    backend: Backend,
    prompts: PromptPair,
    image_ref: str,
    config: DecoderConfig,
) -> tuple[list[int], GateTrace]:
    """Run the dual-stream loop; returns generated tokens and the gate trace.

    The stop token is excluded from the output and only honored once
    min_tokens have been generated.
    """
    session_i = backend.open_session(prompts.instruction_prompt, image_ref,
                                     stream=Stream.INSTRUCTION)
    session_e = backend.open_session(prompts.evidence_prompt, image_ref,
                                     stream=Stream.EVIDENCE)
    v = len(backend.vocab)
    if config.eps >= 1.0 / v:
        raise ConfigurationError(
            f"eps {config.eps} too large for vocab size {v}"
        )
    params = config.gate_params()
    rng = np.random.default_rng(config.seed) if config.selection == "sample" else None
    k = min(TOP_K_RECORDED, v)
    tokens: list[int] = []
    records: list[StepRecord] = []
    for step in range(config.max_tokens):
        off = session_i.off_trace or session_e.off_trace
        try:
            logits_i = session_i.next_logits()
            logits_e = session_e.next_logits()
        except IECD2Error as e:
            raise _step_context(e, step)
        if logits_i.vocab_size != logits_e.vocab_size:
            raise ConfigurationError(
                f"decode step {step}: streams disagree on vocab size "
                f"({logits_i.vocab_size} vs {logits_e.vocab_size})"
            )
        p_i = smooth(softmax_with_temperature(logits_i, config.t_instruction), config.eps)
        p_e = smooth(softmax_with_temperature(logits_e, config.t_evidence), config.eps)
        fused, gate_record = step_fuse(p_i, p_e, params, step)
        token = _select_token(fused, config, rng)
        if token in config.stop_tokens and len(tokens) >= config.min_tokens:
            break
        tokens.append(token)
        records.append(StepRecord(
            gate=gate_record,
            token=token,
            instruction_top=tuple(top_k(p_i, k)),
            evidence_top=tuple(top_k(p_e, k)),
            off_trace=off,
            chosen_log_prob=float(fused.log_probs[token]),
        ))
        try:
            session_i.append_token(token)
            session_e.append_token(token)
        except IECD2Error as e:
            raise _step_context(e, step)
    return tokens, GateTrace(records, config, prompts.digest())


def decode_single_stream(
    backend: Backend,
    prompt: str,
    image_ref: str,
    config: DecoderConfig,
    stream: Stream = Stream.INSTRUCTION,
) -> tuple[list[int], SingleStreamTrace]:
    """Same loop over one stream, no fusion; the baseline decoders."""
    session = backend.open_session(prompt, image_ref, stream=stream)
    v = len(backend.vocab)
    if config.eps >= 1.0 / v:
        raise ConfigurationError(f"eps {config.eps} too large for vocab size {v}")
    temperature = (config.t_instruction if stream is Stream.INSTRUCTION
                   else config.t_evidence)
    rng = np.random.default_rng(config.seed) if config.selection == "sample" else None
    k = min(TOP_K_RECORDED, v)
    tokens: list[int] = []
    records: list[SingleStepRecord] = []
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
    for step in range(config.max_tokens):
        off = session.off_trace
        try:
            logits = session.next_logits()
        except IECD2Error as e:
            raise _step_context(e, step)
        dist = smooth(softmax_with_temperature(logits, temperature), config.eps)
        token = _select_token(dist, config, rng)
        if token in config.stop_tokens and len(tokens) >= config.min_tokens:
            break
        tokens.append(token)
        records.append(SingleStepRecord(
            step=step,
            token=token,
            top=tuple(top_k(dist, k)),
            off_trace=off,
            chosen_log_prob=float(dist.log_probs[token]),
        ))
        try:
            session.append_token(token)
        except IECD2Error as e:
            raise _step_context(e, step)
    return tokens, SingleStreamTrace(records, config, digest)


def write_gate_trace(trace: GateTrace, path: str | Path) -> None:
    """Line-delimited JSON: a header line, then one line per step."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "config": trace.config.to_dict() if trace.config else None,
            "prompt_digest": trace.prompt_digest,
            "records": len(trace.records),
        }
        fh.write(json.dumps(header) + "\n")
        for r in trace.records:
            fh.write(json.dumps({
                "step": r.gate.step,
                "divergence": r.gate.divergence_value,
                "gate": r.gate.gate_value,
                "kind": r.gate.kind.value,
                "token": r.token,
                "instruction_top": [[i, p] for i, p in r.instruction_top],
                "evidence_top": [[i, p] for i, p in r.evidence_top],
                "off_trace": r.off_trace,
                "chosen_log_prob": r.chosen_log_prob,
            }) + "\n")


def read_gate_trace(path: str | Path) -> GateTrace:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InputError(f"empty gate trace file {path}")
    try:
        header = json.loads(lines[0])
        records = []
        for line in lines[1:]:
            d = json.loads(line)
            records.append(StepRecord(
                gate=GateRecord(
                    step=d["step"],
                    divergence_value=d["divergence"],
                    gate_value=d["gate"],
                    kind=DivergenceKind.from_name(d["kind"]),
                ),
                token=d["token"],
                instruction_top=tuple((int(i), float(p)) for i, p in d["instruction_top"]),
                evidence_top=tuple((int(i), float(p)) for i, p in d["evidence_top"]),
                off_trace=d["off_trace"],
                chosen_log_prob=d["chosen_log_prob"],
            ))
    except (json.JSONDecodeError, KeyError) as e:
        raise InputError(f"malformed gate trace {path}: {e}") from e
    config = DecoderConfig.from_dict(header["config"]) if header.get("config") else None
    if header.get("records") != len(records):
        raise InputError(
            f"gate trace {path} header claims {header.get('records')} records, "
            f"found {len(records)}"
        )
    return GateTrace(records, config, header.get("prompt_digest", ""))
