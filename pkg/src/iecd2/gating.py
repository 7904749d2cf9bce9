"""Contrastive gate and gated geometric fusion of the two streams.

The gate maps per-step stream disagreement D to a scalar weight
g = exp(eta * D) / (1 + exp(eta * D)). With eta < 0 the instruction
stream's weight decays from 0.5 at agreement toward 0 as disagreement
grows, which is what suppresses prior-driven tokens the evidence stream
does not support. Fusion is the per-token weighted geometric mean,
renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import TokenDistribution, logsumexp
from .divergences import DEFAULT_DIVERGENCE, DivergenceKind, divergence
from .errors import ConfigurationError, InputError, PreconditionError

import numpy as np

# Open-interval clamps: the gate must never round to exactly 0 or 1.
_GATE_FLOOR = math.ulp(0.0)
_GATE_CEIL = math.nextafter(1.0, 0.0)


@dataclass
class GateParams:
    """Gate hyperparameters.

    eta >= 0 inverts the suppression semantics, so it is rejected unless
    allow_unsafe_eta is set explicitly (ablation escape hatch).
    """

    eta: float = -3.0
    divergence_kind: DivergenceKind = DEFAULT_DIVERGENCE
    allow_unsafe_eta: bool = False

    def __post_init__(self):
        if not math.isfinite(self.eta):
            raise ConfigurationError(f"eta must be finite, got {self.eta}")
        if self.eta >= 0 and not self.allow_unsafe_eta:
            raise ConfigurationError(
                f"eta = {self.eta} is outside the suppressing regime (eta < 0); "
                "pass allow_unsafe_eta=True to override for ablations"
            )


@dataclass
class GateRecord:
    """Per-step gate observability: disagreement and the resulting weight."""

    step: int
    divergence_value: float
    gate_value: float
    kind: DivergenceKind


def gate(divergence_value: float, eta: float) -> float:
    """Numerically stable sigmoid of eta * divergence_value.

    Always strictly inside (0, 1); exactly 0.5 at zero divergence.
    """
    if math.isnan(divergence_value) or math.isnan(eta):
        raise InputError("gate inputs must not be NaN")
    if not math.isfinite(eta):
        raise InputError(f"eta must be finite, got {eta}")
    if divergence_value < 0:
        raise InputError(f"divergence must be non-negative, got {divergence_value}")
    x = eta * divergence_value
    if x >= 0:
        g = 1.0 / (1.0 + math.exp(-x))
    else:
        ex = math.exp(x)
        g = ex / (1.0 + ex)
    return min(max(g, _GATE_FLOOR), _GATE_CEIL)


def fuse(
    p_instruction: TokenDistribution,
    p_evidence: TokenDistribution,
    g: float,
) -> TokenDistribution:
    """Weighted geometric mean of the streams, renormalized in log space.

    log p_fused = g * log p_I + (1 - g) * log p_E - logsumexp(...)
    """
    if p_instruction.vocab_size != p_evidence.vocab_size:
        raise InputError(
            f"vocab size mismatch: {p_instruction.vocab_size} vs "
            f"{p_evidence.vocab_size}"
        )
    if not (isinstance(g, (int, float)) and math.isfinite(g) and 0.0 <= g <= 1.0):
        raise ConfigurationError(f"fusion weight g must lie in [0, 1], got {g}")
    lp_i = p_instruction.log_probs
    lp_e = p_evidence.log_probs
    if lp_i.min() == -np.inf or lp_e.min() == -np.inf:
        raise PreconditionError("fusion requires smoothed (full-support) streams")
    mixed = g * lp_i + (1.0 - g) * lp_e
    return TokenDistribution._trusted(mixed - logsumexp(mixed))


def step_fuse(
    p_instruction: TokenDistribution,
    p_evidence: TokenDistribution,
    params: GateParams,
    step: int,
) -> tuple[TokenDistribution, GateRecord]:
    """Measure disagreement, gate it, fuse the streams; one decode step.

    Runs in the inner decode loop, so inputs are validated once and the
    log-ratio vector is shared between the divergence and the fusion
    (g * lp_I + (1-g) * lp_E == lp_E + g * (lp_I - lp_E)).
    """
    if p_instruction.vocab_size != p_evidence.vocab_size:
        raise InputError(
            f"vocab size mismatch: {p_instruction.vocab_size} vs "
            f"{p_evidence.vocab_size}"
        )
    lp_i = p_instruction.log_probs
    lp_e = p_evidence.log_probs
    diff = lp_i - lp_e
    kind = params.divergence_kind
    if kind is DivergenceKind.SYMMETRIC_KL:
        d = float(np.dot(p_instruction.probs, diff)
                  - np.dot(p_evidence.probs, diff))
    elif kind is DivergenceKind.FORWARD_KL:
        d = float(np.dot(p_instruction.probs, diff))
    elif kind is DivergenceKind.REVERSE_KL:
        d = -float(np.dot(p_evidence.probs, diff))
    else:
        # the bounded measures validate support themselves
        d = divergence(kind, p_instruction, p_evidence)
    if not math.isfinite(d):
        # a zero probability turned the log ratio into nan/inf
        raise PreconditionError("fusion requires smoothed (full-support) streams")
    g = gate(d, params.eta)
    # mixed = g*lp_i + (1-g)*lp_e, built in place on the diff buffer
    mixed = np.multiply(diff, g, out=diff)
    mixed += lp_e
    m = mixed.max()
    scratch = mixed - m
    np.exp(scratch, out=scratch)
    lse = float(m) + math.log(float(scratch.sum()))
    fused_lp = np.subtract(mixed, lse, out=scratch)
    return (TokenDistribution._trusted(fused_lp),
            GateRecord(step, d, g, kind))
