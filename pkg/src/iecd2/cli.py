"""Command-line front end: decode, ablate, eval, bench, gen-toy.

Exit codes: 0 success, 1 evaluation failure (the run itself failed),
2 input or configuration error (bad flags, unreadable files). The
IECD2_LOG environment variable sets the logging level.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backends.base import Backend
from .backends.toy import ToyBackend, generate_toy_corpus, load_toy_corpus, save_toy_corpus
from .backends.trace import TraceBackend
from .bench import run_bench
from .decoding import DecoderConfig, PromptPair, decode, write_gate_trace
from .divergences import DivergenceKind
from .errors import ConfigurationError, IECD2Error, InputError
from .metrics import (
    CaptionRecord,
    YesNoRecord,
    amber_generative,
    binary_scores,
    chair,
    load_annotations,
    metric_report_csv,
)
from .prompts import TASKS

logger = logging.getLogger(__name__)

ABLATE_COLUMNS = [
    "eta", "t_instruction", "t_evidence", "divergence",
    "chair_analogue", "cover_analogue", "hal_analogue",
    "mean_gate", "runtime_seconds", "error",
]

BENCH_COLUMNS = ["variant", "length", "median_seconds"]


class _SetupError(Exception):
    """Wraps errors raised while assembling a run (exit code 2)."""

    def __init__(self, cause: BaseException):
        super().__init__(str(cause))
        self.cause = cause


@dataclass
class SweepSpec:
    """Hyperparameter grids for the ablation sweep."""

    eta_grid: tuple[float, ...] = (-2.0, -3.0, -5.0)
    t_instruction_grid: tuple[float, ...] = (0.7, 1.0, 1.3)
    t_evidence_grid: tuple[float, ...] = (0.7, 0.9, 1.3)
    divergence_grid: tuple[DivergenceKind, ...] = (DivergenceKind.SYMMETRIC_KL,)
    cap: int = 256

    def __post_init__(self):
        for name in ("eta_grid", "t_instruction_grid", "t_evidence_grid",
                     "divergence_grid"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must be non-empty")
        if len(list(self.cells())) > self.cap:
            raise ConfigurationError(
                f"sweep has more than {self.cap} cells; raise --cap if intended"
            )

    def cells(self):
        """Grid cells in deterministic lexicographic order."""
        return itertools.product(
            sorted(self.eta_grid),
            sorted(self.t_instruction_grid),
            sorted(self.t_evidence_grid),
            sorted(self.divergence_grid, key=lambda k: k.value),
        )


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return doc


def _decoder_config(args, file_cfg: dict) -> DecoderConfig:
    values = dict(file_cfg.get("decoder", {}))
    overrides = {
        "eta": args.eta,
        "t_instruction": args.t_instr,
        "t_evidence": args.t_evid,
        "divergence_kind": args.divergence,
        "eps": args.eps,
        "max_tokens": args.max_tokens,
        "min_tokens": args.min_tokens,
        "selection": args.selection,
        "sample_temperature": args.sample_temperature,
        "seed": args.seed,
        "task_profile": args.profile,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if getattr(args, "stop_tokens", None):
        values["stop_tokens"] = [int(t) for t in args.stop_tokens.split(",")]
    if args.unsafe_eta:
        values["allow_unsafe_eta"] = True
    return DecoderConfig.from_dict(values)


def _backend_from_args(args, file_cfg: dict) -> tuple[Backend, str]:
    """Returns (backend, image_ref). Exactly one backend source is allowed."""
    backend_cfg = dict(file_cfg.get("backend", {}))
    scenes = args.scenes or backend_cfg.get("scenes")
    trace = getattr(args, "trace", None) or backend_cfg.get("trace")
    if bool(scenes) == bool(trace):
        raise ConfigurationError("select exactly one backend: --scenes or --trace")
    if trace:
        if not Path(trace).exists():
            raise FileNotFoundError(f"trace file not found: {trace}")
        return TraceBackend.from_file(trace), "trace"
    if not Path(scenes).exists():
        raise FileNotFoundError(f"scene corpus not found: {scenes}")
    backend = load_toy_corpus(scenes)
    scene_id = args.scene_id or backend_cfg.get("scene_id")
    if scene_id is None:
        scene_id = backend.scene_ids[0]
    backend.scene(scene_id)  # reject unknown ids before the run starts
    return backend, scene_id


def _prompts_from_args(args, file_cfg: dict) -> PromptPair:
    prompts_cfg = dict(file_cfg.get("prompts", {}))
    task = args.prompts or prompts_cfg.get("task")
    question = args.question or prompts_cfg.get("question")
    if task:
        if task not in TASKS:
            raise InputError(f"unknown prompt pair {task!r}; expected one of {TASKS}")
        return PromptPair.from_registry(task, question)
    instruction = args.instruction_prompt or prompts_cfg.get("instruction")
    evidence = args.evidence_prompt or prompts_cfg.get("evidence")
    if instruction and evidence:
        return PromptPair(instruction, evidence)
    return PromptPair.from_registry("caption")


def cmd_decode(args) -> int:
    try:
        file_cfg = _load_config_file(args.config)
        config = _decoder_config(args, file_cfg)
        backend, image_ref = _backend_from_args(args, file_cfg)
        prompts = _prompts_from_args(args, file_cfg)
        out_dir = Path(args.out or file_cfg.get("out", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
    except Exception as e:
        raise _SetupError(e)
    tokens, trace = decode(backend, prompts, image_ref, config)
    token_text = " ".join(backend.vocab.token(t) for t in tokens)
    (out_dir / "tokens.txt").write_text(token_text + "\n", encoding="utf-8")
    write_gate_trace(trace, out_dir / "gate_trace.jsonl")
    print(
        f"n_tokens={len(tokens)} mean_divergence={trace.mean_divergence()!r} "
        f"mean_gate={trace.mean_gate()!r} tokens: {token_text}"
    )
    return 0


def _scene_cell_stats(backend: ToyBackend, prompts: PromptPair,
                      config: DecoderConfig) -> dict:
    chair_parts, cover_parts = [], []
    dirty = 0
    gates = []
    for scene_id in backend.scene_ids:
        tokens, trace = decode(backend, prompts, scene_id, config)
        grounded = backend.scene(scene_id).grounded
        ungrounded = sum(1 for t in tokens if t not in grounded)
        chair_parts.append(ungrounded / len(tokens) if tokens else 0.0)
        cover_parts.append(len(set(tokens) & grounded) / len(grounded))
        dirty += 1 if ungrounded else 0
        gates.extend(r.gate.gate_value for r in trace.records)
    n = len(backend.scene_ids)
    return {
        "chair_analogue": sum(chair_parts) / n,
        "cover_analogue": sum(cover_parts) / n,
        "hal_analogue": dirty / n,
        "mean_gate": sum(gates) / len(gates) if gates else 0.0,
    }


def _trace_cell_stats(backend: TraceBackend, prompts: PromptPair,
                      config: DecoderConfig) -> dict:
    _, trace = decode(backend, prompts, "trace", config)
    return {
        "chair_analogue": "",
        "cover_analogue": "",
        "hal_analogue": "",
        "mean_gate": trace.mean_gate(),
    }


def _run_cell(backend, prompts, base_config: DecoderConfig, cell) -> dict:
    eta, t_i, t_e, kind = cell
    row = {
        "eta": eta, "t_instruction": t_i, "t_evidence": t_e,
        "divergence": kind.value, "error": "",
    }
    start = time.perf_counter()
    try:
        config = DecoderConfig.from_dict({
            **base_config.to_dict(),
            "eta": eta, "t_instruction": t_i, "t_evidence": t_e,
            "divergence_kind": kind.value,
        })
        if isinstance(backend, ToyBackend):
            row.update(_scene_cell_stats(backend, prompts, config))
        else:
            row.update(_trace_cell_stats(backend, prompts, config))
    except Exception as e:  # a failed cell must not kill the sweep
        logger.warning("sweep cell %s failed: %s", cell, e)
        row.update({"chair_analogue": "", "cover_analogue": "",
                    "hal_analogue": "", "mean_gate": "", "error": str(e)})
    row["runtime_seconds"] = time.perf_counter() - start
    return row


def _parse_grid(text: str | None, parse, default):
    if text is None:
        return default
    return tuple(parse(part) for part in text.split(","))


def cmd_ablate(args) -> int:
    try:
        file_cfg = _load_config_file(args.config)
        base_config = _decoder_config(args, file_cfg)
        backend, _ = _backend_from_args(args, file_cfg)
        prompts = _prompts_from_args(args, file_cfg)
        spec = SweepSpec(
            eta_grid=_parse_grid(args.eta_grid, float, (-2.0, -3.0, -5.0)),
            t_instruction_grid=_parse_grid(args.t_instr_grid, float, (0.7, 1.0, 1.3)),
            t_evidence_grid=_parse_grid(args.t_evid_grid, float, (0.7, 0.9, 1.3)),
            divergence_grid=_parse_grid(
                args.divergence_grid, DivergenceKind.from_name,
                (base_config.divergence_kind,)),
            cap=args.cap,
        )
        out_path = Path(args.out or file_cfg.get("out", "ablation.csv"))
    except Exception as e:
        raise _SetupError(e)
    cells = list(spec.cells())
    with ThreadPoolExecutor(max_workers=min(4, len(cells))) as pool:
        rows = list(pool.map(
            lambda cell: _run_cell(backend, prompts, base_config, cell), cells))
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} sweep rows to {out_path}")
    return 0


def _load_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"predictions file not found: {path}")
    records = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise InputError(f"{path}:{i + 1}: malformed JSON record: {e}") from e
    if not records:
        raise InputError(f"predictions file {path} is empty")
    return records


def cmd_eval(args) -> int:
    try:
        predictions = _load_jsonl(Path(args.predictions))
        annotations = load_annotations(args.annotations)
    except Exception as e:
        raise _SetupError(e)
    if args.metric == "binary":
        records = [YesNoRecord(str(r.get("question_id", i)), r["predicted"], r["label"])
                   for i, r in enumerate(predictions)]
        scores = binary_scores(records)
        n = len(records)
        rows = [("accuracy", scores.accuracy, n), ("precision", scores.precision, n),
                ("recall", scores.recall, n), ("f1", scores.f1, n)]
    else:
        captions = [CaptionRecord(r["image_id"], r["caption"]) for r in predictions]
        if args.metric == "chair":
            result = chair(captions, annotations)
            n_mentions = sum(len(d.mentions) for d in result.details)
            rows = [("chair_s", result.chair_s, len(captions)),
                    ("chair_i", result.chair_i, n_mentions)]
        else:
            result = amber_generative(captions, annotations)
            n = len(captions)
            n_cover = sum(1 for c in captions if annotations.objects_for(c.image_id))
            rows = [("amber_chair", result.chair, n),
                    ("amber_cover", result.cover, n_cover),
                    ("amber_hal", result.hal, n),
                    ("amber_cog", result.cog, n)]
    report = metric_report_csv(rows)
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    print(report, end="")
    return 0


def cmd_bench(args) -> int:
    try:
        if args.repetitions < 3:
            raise ConfigurationError("bench needs at least 3 repetitions")
        file_cfg = _load_config_file(args.config)
        config = _decoder_config(args, file_cfg)
        backend, image_ref = _backend_from_args(args, file_cfg)
        prompts = _prompts_from_args(args, file_cfg)
        lengths = tuple(int(x) for x in args.lengths.split(","))
    except Exception as e:
        raise _SetupError(e)
    report = run_bench(backend, prompts, image_ref, config,
                       lengths=lengths, repetitions=args.repetitions)
    lines = [",".join(BENCH_COLUMNS)]
    for row in report.rows:
        lines.append(f"{row.variant},{row.length},{row.median_seconds!r}")
    output = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    print(output, end="")
    longest = max(lengths)
    print(f"overhead_ratio@{longest}={report.overhead_ratio(longest):.4f}")
    return 0


def cmd_gen_toy(args) -> int:
    try:
        backend = generate_toy_corpus(args.seed, args.n_scenes,
                                      args.vocab_size, args.lam)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
    except Exception as e:
        raise _SetupError(e)
    save_toy_corpus(backend, out)
    print(f"wrote {args.n_scenes} scenes (vocab {args.vocab_size}, "
          f"lambda {args.lam}) to {out}")
    return 0


def _add_decoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run config; flags override it")
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--t-instr", type=float, default=None,
                        help="instruction stream temperature")
    parser.add_argument("--t-evid", type=float, default=None,
                        help="evidence stream temperature")
    parser.add_argument("--divergence", default=None,
                        choices=[k.value for k in DivergenceKind])
    parser.add_argument("--eps", type=float, default=None,
                        help="smoothing floor")
    parser.add_argument("--max-tokens", type=int, default=None)
    parser.add_argument("--min-tokens", type=int, default=None)
    parser.add_argument("--stop-tokens", default=None,
                        help="comma-separated token ids")
    parser.add_argument("--profile", default=None, choices=["vqa", "caption", "custom"])
    parser.add_argument("--selection", default=None, choices=["greedy", "sample"])
    parser.add_argument("--sample-temperature", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--unsafe-eta", action="store_true",
                        help="permit eta >= 0 (ablation only)")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenes", help="toy scene corpus file")
    parser.add_argument("--scene-id", help="scene to decode (default: first)")
    parser.add_argument("--trace", help="recorded logit trace file")


def _add_prompt_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prompts", choices=TASKS,
                        help="registry prompt pair")
    parser.add_argument("--question", help="question for VQA templates")
    parser.add_argument("--instruction-prompt")
    parser.add_argument("--evidence-prompt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iecd2",
        description="Dual-stream contrastive decoding engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_decode = sub.add_parser("decode", help="run one dual-stream decode")
    _add_decoder_flags(p_decode)
    _add_backend_flags(p_decode)
    _add_prompt_flags(p_decode)
    p_decode.add_argument("--out", help="output directory")
    p_decode.set_defaults(func=cmd_decode)

    p_ablate = sub.add_parser("ablate", help="hyperparameter sweep over a corpus")
    _add_decoder_flags(p_ablate)
    _add_backend_flags(p_ablate)
    _add_prompt_flags(p_ablate)
    p_ablate.add_argument("--eta-grid", help="comma-separated eta values")
    p_ablate.add_argument("--t-instr-grid")
    p_ablate.add_argument("--t-evid-grid")
    p_ablate.add_argument("--divergence-grid",
                          help="comma-separated divergence names")
    p_ablate.add_argument("--cap", type=int, default=256)
    p_ablate.add_argument("--out", help="output CSV path")
    p_ablate.set_defaults(func=cmd_ablate)

    p_eval = sub.add_parser("eval", help="score predictions against annotations")
    p_eval.add_argument("--metric", required=True, choices=["chair", "amber", "binary"])
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--annotations", required=True)
    p_eval.add_argument("--out", help="output CSV path")
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="runtime comparison of decode variants")
    _add_decoder_flags(p_bench)
    _add_backend_flags(p_bench)
    _add_prompt_flags(p_bench)
    p_bench.add_argument("--lengths", default="16,32,64")
    p_bench.add_argument("--repetitions", type=int, default=5)
    p_bench.add_argument("--out", help="output CSV path")
    p_bench.set_defaults(func=cmd_bench)

    p_gen = sub.add_parser("gen-toy", help="generate a seeded toy scene corpus")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--n-scenes", type=int, default=100)
    p_gen.add_argument("--vocab-size", type=int, default=12)
    p_gen.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_toy)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("IECD2_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _SetupError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (IECD2Error, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
