"""Probability-distribution primitives.

Everything downstream (divergences, gating, decoding) operates on
normalized log-probability vectors over a fixed vocabulary. All
arithmetic stays in log space with logsumexp so the geometric fusion
exponent never underflows at vocabulary scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

# Normalization slack tolerated on construction.
_NORMALIZATION_TOL = 1e-6


def logsumexp(x: np.ndarray) -> float:
    """Stable log(sum(exp(x))) for 1-D input; -inf entries are fine."""
    m = x.max()
    if m == -np.inf:
        return -np.inf
    return float(m) + math.log(float(np.exp(x - m).sum()))


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError(f"{name} must be non-empty")
    return arr


@dataclass
class LogitVector:
    """Raw, unnormalized scores over the vocabulary, one per token id."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = _as_float_array(self.scores, "scores")
        if not np.all(np.isfinite(self.scores)):
            raise InputError("logits must be finite (no NaN or infinities)")
        self.scores.flags.writeable = False

    @property
    def vocab_size(self) -> int:
        return self.scores.shape[0]

    @classmethod
    def _trusted(cls, scores: np.ndarray) -> "LogitVector":
        # for backends whose tables were validated once at load time
        vec = object.__new__(cls)
        scores.flags.writeable = False
        vec.scores = scores
        return vec


@dataclass
class TokenDistribution:
    """Normalized log-probability vector.

    Entries of -inf are permitted (a token with exactly zero
    probability) and only appear before smoothing; every consumer that
    needs full support smooths first.
    """

    log_probs: np.ndarray
    _probs: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.log_probs = _as_float_array(self.log_probs, "log_probs")
        if np.any(np.isnan(self.log_probs)) or np.any(np.isposinf(self.log_probs)):
            raise InputError("log_probs must be <= 0 and free of NaN")
        if np.max(self.log_probs) > 1e-9:
            raise InputError("log_probs contain a positive entry; not a distribution")
        residual = logsumexp(self.log_probs)
        if abs(residual) > _NORMALIZATION_TOL:
            raise InputError(
                f"log_probs not normalized: |logsumexp| = {abs(residual):.3e}"
            )
        self.log_probs.flags.writeable = False

    @classmethod
    def from_probs(cls, probs) -> "TokenDistribution":
        p = _as_float_array(probs, "probs")
        if np.any(p < 0):
            raise InputError("probabilities must be non-negative")
        with np.errstate(divide="ignore"):
            return cls(np.log(p))

    @classmethod
    def _trusted(cls, log_probs: np.ndarray) -> "TokenDistribution":
        # fast path for vectors normalized by construction (softmax,
        # smooth, fuse outputs); skips the per-construction validation
        dist = object.__new__(cls)
        log_probs.flags.writeable = False
        dist.log_probs = log_probs
        dist._probs = None
        return dist

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[0]

    @property
    def probs(self) -> np.ndarray:
        if self._probs is None:
            p = np.exp(self.log_probs)
            p.flags.writeable = False
            self._probs = p
        return self._probs


@dataclass
class VocabMap:
    """Ordered token strings with the inverse string-to-id lookup."""

    tokens: tuple[str, ...]
    ids: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        if not self.tokens:
            raise InputError("vocabulary must be non-empty")
        if not self.ids:
            self.ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise InputError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise InputError(f"token id {token_id} out of range")
        return self.tokens[token_id]

    def id_of(self, token: str) -> int:
        try:
            return self.ids[token]
        except KeyError:
            raise InputError(f"unknown token {token!r}") from None


def softmax_with_temperature(
    logits: LogitVector, temperature: float
) -> TokenDistribution:
    """Temperature-scaled softmax, computed in log space."""
    if not np.isfinite(temperature) or temperature <= 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    scaled = logits.scores / temperature
    return TokenDistribution._trusted(scaled - logsumexp(scaled))


def smooth(dist: TokenDistribution, eps: float) -> TokenDistribution:
    """Floor every probability at eps by mixing with the uniform distribution.

    p' = (1 - eps * V) * p + eps, renormalized. A distribution already at
    or above the floor is returned unchanged, which makes the operation
    idempotent.
    """
    v = dist.vocab_size
    if not 0 < eps < 1.0 / v:
        raise ConfigurationError(
            f"smoothing eps must lie in (0, 1/vocab_size); got {eps} for V={v}"
        )
    p = dist.probs
    if p.min() >= eps:
        return dist
    mixed = (1.0 - eps * v) * p + eps
    log_mixed = np.log(mixed)
    return TokenDistribution._trusted(log_mixed - logsumexp(log_mixed))


def top_k(dist: TokenDistribution, k: int) -> list[tuple[int, float]]:
    """The k most probable (token id, probability) pairs, descending.

    Ties break toward the lowest token id.
    """
    v = dist.vocab_size
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= v:
        raise InputError(f"k must be an integer in [1, {v}], got {k}")
    p = dist.probs
    # stable sort keeps the lowest id first among equal probabilities
    order = np.argsort(-p, kind="stable")
    return [(int(i), float(p[i])) for i in order[:k]]
