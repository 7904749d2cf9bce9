#!/usr/bin/env python3
"""One-time calibration of the toy-corpus suppression measurements.

Runs the seeded acceptance corpus (100 scenes, vocab 12, lambda 0.5)
through instruction-only decoding and gated dual-stream decoding at the
eta grid, and records the ungrounded-token rates. The recorded numbers
justify the pinned acceptance thresholds (per-scene dominance and the
>= 50% corpus-level relative reduction).

Usage: python scripts/calibrate_suppression.py [--out calibration/suppression.json]
"""

import argparse
import json
import sys
from pathlib import Path

from iecd2 import DecoderConfig, PromptPair, decode, decode_single_stream
from iecd2.backends import Stream, generate_toy_corpus

CORPUS = {"seed": 0, "n_scenes": 100, "vocab_size": 12, "lam": 0.5}
ETA_GRID = (-2.0, -3.0, -5.0)
MAX_TOKENS = 12


def ungrounded_rate(tokens, grounded):
    if not tokens:
        return 0.0
    return sum(1 for t in tokens if t not in grounded) / len(tokens)


def main(argv=None):
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="calibration/suppression.json")
    args = parser.parse_args(argv)

    backend = generate_toy_corpus(**CORPUS)
    prompts = PromptPair.from_registry("caption")

    instr_tokens_total = 0
    instr_bad_total = 0
    per_scene_instr = {}
    for sid in backend.scene_ids:
        tokens, _ = decode_single_stream(
            backend, prompts.instruction_prompt, sid,
            DecoderConfig(max_tokens=MAX_TOKENS), stream=Stream.INSTRUCTION)
        grounded = backend.scene(sid).grounded
        per_scene_instr[sid] = ungrounded_rate(tokens, grounded)
        instr_tokens_total += len(tokens)
        instr_bad_total += sum(1 for t in tokens if t not in grounded)
    instr_rate = instr_bad_total / instr_tokens_total

    fused_by_eta = {}
    violations = []
    for eta in ETA_GRID:
        cfg = DecoderConfig(eta=eta, max_tokens=MAX_TOKENS)
        bad_total = 0
        tokens_total = 0
        for sid in backend.scene_ids:
            tokens, _ = decode(backend, prompts, sid, cfg)
            grounded = backend.scene(sid).grounded
            rate = ungrounded_rate(tokens, grounded)
            if eta == -3.0 and rate > per_scene_instr[sid]:
                violations.append(sid)
            bad_total += sum(1 for t in tokens if t not in grounded)
            tokens_total += len(tokens)
        fused_by_eta[str(eta)] = bad_total / tokens_total

    default_rate = fused_by_eta["-3.0"]
    reduction = (instr_rate - default_rate) / instr_rate if instr_rate else 0.0
    report = {
        "corpus": CORPUS,
        "max_tokens": MAX_TOKENS,
        "instruction_only_ungrounded_rate": instr_rate,
        "fused_ungrounded_rate_by_eta": fused_by_eta,
        "relative_reduction_at_default_eta": reduction,
        "per_scene_dominance_violations": violations,
        "pinned_thresholds": {
            "per_scene": "fused rate <= instruction-only rate on every scene",
            "corpus_relative_reduction_min": 0.5,
        },
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

    print(f"instruction-only ungrounded rate: {instr_rate:.4f}")
    for eta, rate in fused_by_eta.items():
        print(f"fused rate at eta={eta}: {rate:.4f}")
    print(f"relative reduction at eta=-3.0: {reduction:.2%}")
    print(f"per-scene dominance violations: {len(violations)}")
    print(f"wrote {out}")
    if reduction < 0.5 or violations:
        print("calibration FAILED the pinned thresholds", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
