"""Per-token fusion rules for every supported decoder.

Each step function takes raw logit vectors from one or two model queries
and returns a StepDecision holding the fused, plausibility-restricted
logits plus the quantities a trace records (divergence, branch taken,
keep-set size). Fusion always happens on raw logits; distributions enter
only through the divergence gate and the plausibility cutoff.

The divergence-gated rule: with p = softmax(f_v / T) for the fully
conditioned query and p' = softmax(f_v' / T) for the feedback query,
d_t = JS(p, p') in bits. When d_t < gamma the two views agree and the
feedback logits are added in (complementary, f_v + alpha1 * f_v');
otherwise the feedback is subtracted out (contrastive,
(1 + alpha2) * f_v - alpha2 * f_v'). Masked entries propagate by union:
a token masked in either input stays masked in the fusion.

Baseline decoders do not gate on the divergence but still compute and
record it, so traces from any decoder feed the same analysis.

The plausibility keep-set is always derived from the fully conditioned
distribution p and applied to the fused logits, for every decoder.
The divergence is always computed over the full vocabulary, before any
plausibility masking, so the gate threshold and the truncation cutoff
stay independent knobs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from degf.config import DecodeConfig
from degf.vectors import (
    LogitVector,
    ProbVector,
    apply_mask,
    js_divergence,
    plausibility_mask,
    softmax,
)


class Branch(enum.Enum):
    COMPLEMENTARY = "complementary"
    CONTRASTIVE = "contrastive"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class StepDecision:
    """Outcome of one fusion step, ready for sampling and tracing."""

    fused: LogitVector
    distance: float
    branch: Branch
    keep_set_size: int
    p: ProbVector
    p_prime: Optional[ProbVector] = None


def _union(a: LogitVector, b: LogitVector) -> np.ndarray:
    return a.masked | b.masked


def _restrict(
    raw_values: np.ndarray, mask: np.ndarray, reference: ProbVector, beta: float
) -> Tuple[LogitVector, int]:
    keep = plausibility_mask(reference, beta)
    fused = apply_mask(LogitVector(raw_values, mask), keep)
    return fused, int(np.count_nonzero(keep))


def regular_step(f_v: LogitVector, cfg: DecodeConfig) -> StepDecision:
    """Plain decoding: no fusion, just the plausibility cutoff."""
    p = softmax(f_v, cfg.temperature)
    fused, keep_n = _restrict(f_v.values, f_v.masked, p, cfg.beta)
    return StepDecision(
        fused=fused,
        distance=0.0,
        branch=Branch.NOT_APPLICABLE,
        keep_set_size=keep_n,
        p=p,
    )


def degf_step(
    f_v: LogitVector, f_vprime: LogitVector, cfg: DecodeConfig
) -> StepDecision:
    """Divergence-gated fusion of the original and feedback queries."""
    p = softmax(f_v, cfg.temperature)
    p_prime = softmax(f_vprime, cfg.temperature)
    d_t = js_divergence(p, p_prime)
    if d_t < cfg.gamma:
        branch = Branch.COMPLEMENTARY
        raw = f_v.values + cfg.alpha1 * f_vprime.values
    else:
        branch = Branch.CONTRASTIVE
        raw = (1.0 + cfg.alpha2) * f_v.values - cfg.alpha2 * f_vprime.values
    fused, keep_n = _restrict(raw, _union(f_v, f_vprime), p, cfg.beta)
    return StepDecision(
        fused=fused,
        distance=d_t,
        branch=branch,
        keep_set_size=keep_n,
        p=p,
        p_prime=p_prime,
    )


def _baseline(
    f_v: LogitVector,
    f_second: LogitVector,
    raw: np.ndarray,
    cfg: DecodeConfig,
) -> StepDecision:
    p = softmax(f_v, cfg.temperature)
    p_second = softmax(f_second, cfg.temperature)
    d_t = js_divergence(p, p_second)
    fused, keep_n = _restrict(raw, _union(f_v, f_second), p, cfg.beta)
    return StepDecision(
        fused=fused,
        distance=d_t,
        branch=Branch.NOT_APPLICABLE,
        keep_set_size=keep_n,
        p=p,
        p_prime=p_second,
    )


def vcd_step(
    f_v: LogitVector, f_distorted: LogitVector, cfg: DecodeConfig
) -> StepDecision:
    """Contrast against a distorted-image query:
    (1 + a) * f_v - a * f_distorted."""
    a = cfg.vcd_alpha
    raw = (1.0 + a) * f_v.values - a * f_distorted.values
    return _baseline(f_v, f_distorted, raw, cfg)


def m3id_coefficient(lam: float, t: int) -> float:
    """Time-growing text-prior correction weight
    (1 - e^{-lam*t}) / e^{-lam*t}, i.e. e^{lam*t} - 1."""
    return math.expm1(lam * t)


def m3id_step(
    f_v: LogitVector, f_textonly: LogitVector, t: int, cfg: DecodeConfig
) -> StepDecision:
    """Push away from the text-only prior with a weight that grows with
    position t: f_v + c(t) * (f_v - f_textonly)."""
    if t < 0:
        raise ValueError(f"step index must be >= 0, got {t}")
    c = m3id_coefficient(cfg.m3id_lambda, t)
    raw = f_v.values + c * (f_v.values - f_textonly.values)
    return _baseline(f_v, f_textonly, raw, cfg)


def ritual_step(
    f_v: LogitVector, f_transformed: LogitVector, cfg: DecodeConfig
) -> StepDecision:
    """Reinforce with an augmented-view query: f_v + kappa * f_transformed."""
    raw = f_v.values + cfg.ritual_kappa * f_transformed.values
    return _baseline(f_v, f_transformed, raw, cfg)
