"""Wall-clock benchmarking of the decoding variants.

Compares instruction-only, evidence-only, dual-stream with session
reuse (sessions opened once, appended incrementally) and dual-stream
with fresh sessions per step (the whole history replayed into new
sessions every step, i.e. no cache reuse). Medians over repetitions;
desk-scale timings are too noisy for means.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, replace

from .backends.base import Backend, Stream
from .decoding import TOP_K_RECORDED, DecoderConfig, PromptPair, StepRecord, decode, decode_single_stream
from .distributions import smooth, softmax_with_temperature, top_k
from .errors import ConfigurationError
from .gating import step_fuse

import numpy as np

VARIANTS = ("instruction-only", "evidence-only", "dual-reuse", "dual-fresh")


def _release_heap() -> None:
    """Hand freed arenas back to the OS so prior allocation history in
    the process does not skew the measurements."""
    gc.collect()
    try:
        import ctypes
        ctypes.CDLL("libc.so.6").malloc_trim(0)
    except OSError:  # non-glibc platform; timings just get noisier
        pass


@dataclass
class BenchRow:
    variant: str
    length: int
    median_seconds: float


@dataclass
class BenchReport:
    rows: list[BenchRow]
    repetitions: int
    samples: dict = None  # {length: {variant: [seconds per repetition]}}

    def median(self, variant: str, length: int) -> float:
        for row in self.rows:
            if row.variant == variant and row.length == length:
                return row.median_seconds
        raise KeyError(f"no bench row for {variant} at length {length}")

    def overhead_ratio(self, length: int) -> float:
        """dual-reuse time relative to the sum of the two single streams.

        Repetitions are interleaved, so the i-th samples of all variants
        share one time window; the median of per-repetition ratios
        cancels machine-load drift that would bias a ratio of medians.
        """
        per_variant = (self.samples or {}).get(length)
        if per_variant and all(k in per_variant for k in
                               ("instruction-only", "evidence-only", "dual-reuse")):
            ratios = sorted(
                d / (i + e) for d, i, e in zip(per_variant["dual-reuse"],
                                               per_variant["instruction-only"],
                                               per_variant["evidence-only"]))
            return ratios[len(ratios) // 2]
        single_sum = (self.median("instruction-only", length)
                      + self.median("evidence-only", length))
        return self.median("dual-reuse", length) / single_sum


def _decode_dual_fresh(backend: Backend, prompts: PromptPair, image_ref: str,
                       config: DecoderConfig) -> list[int]:
    """Dual-stream decode that rebuilds both sessions at every step.

    Does everything the engine loop does (records included) so the only
    difference being measured is the lost session reuse.
    """
    params = config.gate_params()
    k = min(TOP_K_RECORDED, len(backend.vocab))
    tokens: list[int] = []
    records = []
    for step in range(config.max_tokens):
        session_i = backend.open_session(prompts.instruction_prompt, image_ref,
                                         stream=Stream.INSTRUCTION)
        session_e = backend.open_session(prompts.evidence_prompt, image_ref,
                                         stream=Stream.EVIDENCE)
        for tok in tokens:
            session_i.append_token(tok)
            session_e.append_token(tok)
        off = session_i.off_trace or session_e.off_trace
        p_i = smooth(softmax_with_temperature(session_i.next_logits(),
                                              config.t_instruction), config.eps)
        p_e = smooth(softmax_with_temperature(session_e.next_logits(),
                                              config.t_evidence), config.eps)
        fused, gate_record = step_fuse(p_i, p_e, params, step)
        token = int(np.argmax(fused.log_probs))
        tokens.append(token)
        records.append(StepRecord(
            gate=gate_record,
            token=token,
            instruction_top=tuple(top_k(p_i, k)),
            evidence_top=tuple(top_k(p_e, k)),
            off_trace=off,
            chosen_log_prob=float(fused.log_probs[token]),
        ))
    return tokens


def run_bench(
    backend: Backend,
    prompts: PromptPair,
    image_ref: str,
    config: DecoderConfig,
    lengths: tuple[int, ...] = (16, 32, 64),
    repetitions: int = 5,
    variants: tuple[str, ...] = VARIANTS,
) -> BenchReport:
    if repetitions < 3:
        raise ConfigurationError("bench needs at least 3 repetitions")
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ConfigurationError(f"unknown bench variants: {sorted(unknown)}")
    runners = {
        "instruction-only": lambda cfg: decode_single_stream(
            backend, prompts.instruction_prompt, image_ref, cfg,
            stream=Stream.INSTRUCTION),
        "evidence-only": lambda cfg: decode_single_stream(
            backend, prompts.evidence_prompt, image_ref, cfg,
            stream=Stream.EVIDENCE),
        "dual-reuse": lambda cfg: decode(backend, prompts, image_ref, cfg),
        "dual-fresh": lambda cfg: _decode_dual_fresh(backend, prompts,
                                                     image_ref, cfg),
    }
    rows = []
    all_samples = {}
    for length in lengths:
        cfg = replace(config, max_tokens=length, min_tokens=0,
                      task_profile="custom", stop_tokens=frozenset())
        for variant in variants:
            runners[variant](cfg)  # warm-up, untimed
        _release_heap()
        # interleave repetitions so clock drift and allocator state hit
        # every variant equally; GC pauses are kept out of the timings
        samples = {variant: [] for variant in variants}
        gc_was_enabled = gc.isenabled()
        try:
            for _ in range(repetitions):
                for variant in variants:
                    gc.collect()
                    gc.disable()
                    start = time.perf_counter()
                    runners[variant](cfg)
                    elapsed = time.perf_counter() - start
                    if gc_was_enabled:
                        gc.enable()
                    samples[variant].append(elapsed)
        finally:
            if gc_was_enabled:
                gc.enable()
        all_samples[length] = samples
        for variant in variants:
            ordered = sorted(samples[variant])
            rows.append(BenchRow(variant, length, ordered[len(ordered) // 2]))
    return BenchReport(rows, repetitions, all_samples)
