"""Synthetic scene-conditioned bigram backend.

Each scene carries two bigram tables over the full vocabulary: one
encoding what a language prior would continue with, one conditioned on
the objects actually present. The evidence stream reads the scene table
directly; the instruction stream reads the per-scene mixture
(1 - lambda) * scene + lambda * prior, so lambda controls how much the
"model" leans on its prior. Bigram order keeps every oracle an exact
table lookup.

The prompt text does not shift the bigram context (every session starts
from the reserved start token); it only selects which stream the session
runs as, via the grounding markers below. That mirrors the one property
of prompting this engine cares about: strict-grounding wording flips the
model into its conservative regime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import softmax

from ..distributions import LogitVector, VocabMap
from ..errors import InputError
from .base import Backend, Prompt, Stream, StreamSession

# Phrases that mark a prompt as strict-grounding (evidence) wording.
EVIDENCE_MARKERS = ("ONLY", "visible", "Do not guess", "Do not assume")

START_TOKEN = 0
START_TOKEN_TEXT = "<s>"


def classify_prompt(prompt: str) -> Stream:
    if any(marker in prompt for marker in EVIDENCE_MARKERS):
        return Stream.EVIDENCE
    return Stream.INSTRUCTION


@dataclass
class ToyScene:
    """One synthetic image: grounded token set plus the two bigram tables."""

    scene_id: str
    grounded: frozenset[int]
    lam: float
    prior_logits: np.ndarray
    scene_logits: np.ndarray

    def __post_init__(self):
        self.grounded = frozenset(int(t) for t in self.grounded)
        self.prior_logits = np.asarray(self.prior_logits, dtype=np.float64)
        self.scene_logits = np.asarray(self.scene_logits, dtype=np.float64)
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.prior_logits.ndim != 2 or self.prior_logits.shape[0] != self.prior_logits.shape[1]:
            raise InputError("prior table must be square (context x vocab)")
        if self.prior_logits.shape != self.scene_logits.shape:
            raise InputError("prior and scene tables must cover the same vocabulary")
        if not (np.all(np.isfinite(self.prior_logits)) and np.all(np.isfinite(self.scene_logits))):
            raise InputError("bigram tables must be finite")
        v = self.prior_logits.shape[0]
        bad = [t for t in self.grounded if not 0 <= t < v]
        if bad:
            raise InputError(f"grounded token ids out of range: {bad}")

    @property
    def vocab_size(self) -> int:
        return self.prior_logits.shape[0]


class _SceneTables:
    """Per-scene derived rows, computed once and shared by sessions."""

    def __init__(self, scene: ToyScene):
        scene_probs = softmax(scene.scene_logits, axis=1)
        prior_probs = softmax(scene.prior_logits, axis=1)
        mixture = (1.0 - scene.lam) * scene_probs + scene.lam * prior_probs
        self.instruction_logits = np.log(mixture)
        self.evidence_logits = np.log(scene_probs)
        self.scene_probs = scene_probs
        self.prior_probs = prior_probs
        for arr in (self.instruction_logits, self.evidence_logits,
                    self.scene_probs, self.prior_probs):
            arr.flags.writeable = False


class ToySession(StreamSession):
    def __init__(self, tables: _SceneTables, vocab_size: int,
                 stream: Stream, prompt_tokens):
        super().__init__(stream, prompt_tokens)
        self._tables = tables
        self._vocab_size = vocab_size

    def _context(self) -> int:
        return self._history[-1] if self._history else self.prompt_tokens[-1]

    def next_logits(self) -> LogitVector:
        # tables were validated when the scene was built
        if self.stream is Stream.INSTRUCTION:
            row = self._tables.instruction_logits[self._context()]
        else:
            row = self._tables.evidence_logits[self._context()]
        return LogitVector._trusted(row)

    def append_token(self, token_id: int) -> None:
        token_id = int(token_id)
        if not 0 <= token_id < self._vocab_size:
            raise InputError(f"token id {token_id} out of range")
        self._history.append(token_id)


class ToyBackend(Backend):
    def __init__(self, vocab: VocabMap, scenes: dict[str, ToyScene] | list[ToyScene]):
        if isinstance(scenes, list):
            scenes = {s.scene_id: s for s in scenes}
        self._vocab = vocab
        self._scenes = dict(scenes)
        for scene in self._scenes.values():
            if scene.vocab_size != len(vocab):
                raise InputError(
                    f"scene {scene.scene_id!r} tables sized {scene.vocab_size}, "
                    f"vocab is {len(vocab)}"
                )
        self._tables = {sid: _SceneTables(s) for sid, s in self._scenes.items()}

    @property
    def vocab(self) -> VocabMap:
        return self._vocab

    @property
    def scene_ids(self) -> list[str]:
        return sorted(self._scenes)

    def scene(self, scene_id: str) -> ToyScene:
        try:
            return self._scenes[scene_id]
        except KeyError:
            raise InputError(f"unknown scene id {scene_id!r}") from None

    def open_session(
        self,
        prompt: Prompt,
        image_ref: str,
        stream: Stream | None = None,
    ) -> ToySession:
        scene = self.scene(image_ref)
        if isinstance(prompt, str):
            if not prompt:
                raise InputError("prompt must be non-empty")
            tokens = (START_TOKEN,)
            resolved = stream or classify_prompt(prompt)
        else:
            tokens = self._check_token_prompt(prompt)
            resolved = stream or Stream.INSTRUCTION
        return ToySession(self._tables[scene.scene_id], len(self._vocab),
                          resolved, tokens)


def default_vocab(vocab_size: int) -> VocabMap:
    if vocab_size < 3:
        raise InputError("toy vocabulary needs at least 3 tokens")
    return VocabMap((START_TOKEN_TEXT,) + tuple(f"t{i:02d}" for i in range(1, vocab_size)))


def generate_toy_corpus(
    seed: int,
    n_scenes: int,
    vocab_size: int = 12,
    lam: float = 0.5,
) -> ToyBackend:
    """Seeded corpus of scenes with grounded tokens and prior attractors.

    Scene tables concentrate mass on the grounded set; prior tables pull
    toward a few ungrounded attractor tokens (and mildly toward the
    grounded set, so agreement is possible). Margins are wide relative
    to the noise so greedy paths are unambiguous.
    """
    if n_scenes < 1:
        raise InputError("n_scenes must be positive")
    vocab = default_vocab(vocab_size)
    rng = np.random.default_rng(seed)
    candidate_ids = np.arange(1, vocab_size)
    n_grounded = max(2, min(4, vocab_size // 3))
    n_attractors = max(1, min(3, (vocab_size - 1 - n_grounded) // 2))
    scenes = []
    for i in range(n_scenes):
        grounded = rng.choice(candidate_ids, size=n_grounded, replace=False)
        remaining = np.setdiff1d(candidate_ids, grounded)
        attractors = rng.choice(remaining, size=n_attractors, replace=False)
        scene_logits = rng.normal(0.0, 0.3, size=(vocab_size, vocab_size))
        scene_logits[:, grounded] += 4.0
        prior_logits = rng.normal(0.0, 0.3, size=(vocab_size, vocab_size))
        prior_logits[:, attractors] += 5.0
        prior_logits[:, grounded] += 2.0
        scenes.append(
            ToyScene(
                scene_id=f"scene-{i:03d}",
                grounded=frozenset(int(t) for t in grounded),
                lam=lam,
                prior_logits=prior_logits,
                scene_logits=scene_logits,
            )
        )
    return ToyBackend(vocab, scenes)


def save_toy_corpus(backend: ToyBackend, path: str | Path) -> None:
    doc = {
        "vocab": list(backend.vocab.tokens),
        "scenes": [
            {
                "scene_id": sid,
                "grounded": sorted(backend.scene(sid).grounded),
                "lambda": backend.scene(sid).lam,
                "prior": backend.scene(sid).prior_logits.tolist(),
                "scene": backend.scene(sid).scene_logits.tolist(),
            }
            for sid in backend.scene_ids
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_toy_corpus(path: str | Path) -> ToyBackend:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"malformed scene corpus {path}: {e}") from e
    try:
        vocab = VocabMap(tuple(doc["vocab"]))
        scenes = [
            ToyScene(
                scene_id=s["scene_id"],
                grounded=frozenset(s["grounded"]),
                lam=s["lambda"],
                prior_logits=np.array(s["prior"], dtype=np.float64),
                scene_logits=np.array(s["scene"], dtype=np.float64),
            )
            for s in doc["scenes"]
        ]
    except KeyError as e:
        raise InputError(f"scene corpus {path} missing field {e}") from e
    return ToyBackend(vocab, scenes)
