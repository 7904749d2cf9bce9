"""Divergence measures between two token distributions.

The contrastive gate consumes one scalar disagreement value per step;
these are the five measures it can be driven by. All of them require
full support, so callers smooth first.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .distributions import TokenDistribution
from .errors import InputError, PreconditionError


class DivergenceKind(enum.Enum):
    FORWARD_KL = "forward-kl"
    REVERSE_KL = "reverse-kl"
    SYMMETRIC_KL = "symmetric-kl"
    HELLINGER = "hellinger"
    BHATTACHARYYA = "bhattacharyya"

    @classmethod
    def from_name(cls, name: str) -> "DivergenceKind":
        for kind in cls:
            if kind.value == name:
                return kind
        valid = ", ".join(k.value for k in cls)
        raise InputError(f"unknown divergence {name!r}; expected one of: {valid}")


DEFAULT_DIVERGENCE = DivergenceKind.SYMMETRIC_KL


def _check_pair(p: TokenDistribution, q: TokenDistribution) -> None:
    if p.vocab_size != q.vocab_size:
        raise InputError(
            f"vocab size mismatch: {p.vocab_size} vs {q.vocab_size}"
        )
    if p.log_probs.min() == -np.inf or q.log_probs.min() == -np.inf:
        raise PreconditionError(
            "divergences require full support; smooth the distributions first"
        )


def forward_kl(p: TokenDistribution, q: TokenDistribution) -> float:
    """KL(p || q) in nats."""
    _check_pair(p, q)
    diff = p.log_probs - q.log_probs
    return float(np.dot(p.probs, diff))


def reverse_kl(p: TokenDistribution, q: TokenDistribution) -> float:
    """KL(q || p) in nats."""
    return forward_kl(q, p)


def symmetric_kl(p: TokenDistribution, q: TokenDistribution) -> float:
    """KL(p || q) + KL(q || p), sharing one log-ratio pass."""
    _check_pair(p, q)
    diff = p.log_probs - q.log_probs
    return float(np.dot(p.probs, diff) - np.dot(q.probs, diff))


def _bhattacharyya_coefficient(p: TokenDistribution, q: TokenDistribution) -> float:
    _check_pair(p, q)
    return float(np.sum(np.exp(0.5 * (p.log_probs + q.log_probs))))


def hellinger(p: TokenDistribution, q: TokenDistribution) -> float:
    """sqrt(1 - sum_i sqrt(p_i q_i)), clamped into [0, 1] against rounding."""
    bc = _bhattacharyya_coefficient(p, q)
    return math.sqrt(min(max(1.0 - bc, 0.0), 1.0))


def bhattacharyya(p: TokenDistribution, q: TokenDistribution) -> float:
    """-ln sum_i sqrt(p_i q_i), clamped at 0 against rounding."""
    bc = _bhattacharyya_coefficient(p, q)
    return max(0.0, -math.log(bc))


_DISPATCH = {
    DivergenceKind.FORWARD_KL: forward_kl,
    DivergenceKind.REVERSE_KL: reverse_kl,
    DivergenceKind.SYMMETRIC_KL: symmetric_kl,
    DivergenceKind.HELLINGER: hellinger,
    DivergenceKind.BHATTACHARYYA: bhattacharyya,
}


def divergence(
    kind: DivergenceKind, p: TokenDistribution, q: TokenDistribution
) -> float:
    return _DISPATCH[kind](p, q)
