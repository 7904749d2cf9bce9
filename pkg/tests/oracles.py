"""Independent reference implementations used to pin expected values.

Everything here is deliberately written against raw inputs (plain
Python lists, math module, mpmath) and never calls into the package's
own numerics, so a bug in the engine cannot hide in its own oracle.
"""

from __future__ import annotations

import math

import mpmath

mpmath.mp.dps = 50


def softmax_mp(logits, temperature=1.0):
    """Arbitrary-precision temperature softmax; returns Python floats."""
    scaled = [mpmath.mpf(x) / mpmath.mpf(temperature) for x in logits]
    exps = [mpmath.e ** s for s in scaled]
    total = mpmath.fsum(exps)
    return [float(e / total) for e in exps]


def smooth_ref(probs, eps):
    """Mix-with-uniform floor: p' = (1 - eps*V) * p + eps, renormalized."""
    v = len(probs)
    if min(probs) >= eps:
        return list(probs)
    mixed = [(1.0 - eps * v) * p + eps for p in probs]
    total = sum(mixed)
    return [m / total for m in mixed]


def forward_kl_ref(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def reverse_kl_ref(p, q):
    return forward_kl_ref(q, p)


def symmetric_kl_ref(p, q):
    return forward_kl_ref(p, q) + forward_kl_ref(q, p)


def bhattacharyya_coeff_ref(p, q):
    return sum(math.sqrt(pi * qi) for pi, qi in zip(p, q))


def hellinger_ref(p, q):
    return math.sqrt(max(0.0, 1.0 - bhattacharyya_coeff_ref(p, q)))


def bhattacharyya_ref(p, q):
    return -math.log(bhattacharyya_coeff_ref(p, q))


DIVERGENCE_REFS = {
    "forward-kl": forward_kl_ref,
    "reverse-kl": reverse_kl_ref,
    "symmetric-kl": symmetric_kl_ref,
    "hellinger": hellinger_ref,
    "bhattacharyya": bhattacharyya_ref,
}


def gate_ref(divergence_value, eta):
    x = mpmath.mpf(eta) * mpmath.mpf(divergence_value)
    ex = mpmath.e ** x
    return float(ex / (1 + ex))


def fuse_ref(p_instruction, p_evidence, g):
    """Geometric fusion straight in probability space."""
    raw = [pi ** g * pe ** (1.0 - g)
           for pi, pe in zip(p_instruction, p_evidence)]
    total = sum(raw)
    return [r / total for r in raw]


def argmax_lowest_id(values):
    best, best_id = None, None
    for i, v in enumerate(values):
        if best is None or v > best:
            best, best_id = v, i
    return best_id


def entropy_ref(probs):
    return -sum(p * math.log(p) for p in probs if p > 0)


def toy_stream_probs(scene, context, stream, temperature):
    """Per-stream next-token probabilities from the raw scene tables."""
    scene_row = softmax_mp(list(scene.scene_logits[context]))
    if stream == "evidence":
        base = scene_row
    else:
        prior_row = softmax_mp(list(scene.prior_logits[context]))
        lam = scene.lam
        base = [(1.0 - lam) * s + lam * p for s, p in zip(scene_row, prior_row)]
    if temperature == 1.0:
        return base
    powered = [b ** (1.0 / temperature) for b in base]
    total = sum(powered)
    return [x / total for x in powered]


def brute_force_decode(scene, config, start_token=0):
    """Recompute a full greedy dual-stream decode from the raw tables.

    Returns tokens plus the per-step distributions and gate values so
    the caller can compare trajectories, not just outputs.
    """
    context = start_token
    tokens = []
    steps = []
    divergence_ref = DIVERGENCE_REFS[config.divergence_kind.value]
    for _ in range(config.max_tokens):
        p_i = smooth_ref(
            toy_stream_probs(scene, context, "instruction", config.t_instruction),
            config.eps)
        p_e = smooth_ref(
            toy_stream_probs(scene, context, "evidence", config.t_evidence),
            config.eps)
        d = divergence_ref(p_i, p_e)
        g = gate_ref(d, config.eta)
        fused = fuse_ref(p_i, p_e, g)
        token = argmax_lowest_id(fused)
        steps.append({
            "p_instruction": p_i,
            "p_evidence": p_e,
            "divergence": d,
            "gate": g,
            "fused": fused,
            "token": token,
        })
        if token in config.stop_tokens and len(tokens) >= config.min_tokens:
            break
        tokens.append(token)
        context = token
    return tokens, steps


def brute_force_single_stream(scene, config, stream, start_token=0):
    context = start_token
    temperature = (config.t_instruction if stream == "instruction"
                   else config.t_evidence)
    tokens = []
    for _ in range(config.max_tokens):
        dist = smooth_ref(
            toy_stream_probs(scene, context, stream, temperature), config.eps)
        token = argmax_lowest_id(dist)
        if token in config.stop_tokens and len(tokens) >= config.min_tokens:
            break
        tokens.append(token)
        context = token
    return tokens


def confusion_matrix_ref(pairs):
    """(accuracy, precision, recall, f1) recomputed from scratch."""
    tp = fp = tn = fn = 0
    for predicted, label in pairs:
        if predicted == "yes" and label == "yes":
            tp += 1
        elif predicted == "yes" and label == "no":
            fp += 1
        elif predicted == "no" and label == "no":
            tn += 1
        else:
            fn += 1
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return accuracy, precision, recall, f1
