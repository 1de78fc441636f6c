"""Logit/probability vector types and the algebra over them.

A masked logit entry is represented by a boolean flag alongside the value
array rather than by an actual -inf, so fusion arithmetic never touches
infinities: masked entries simply stay masked through every operation and
come out of softmax as probability exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from degf import kernels
from degf.errors import DegenerateDistributionError, DimensionError

PROB_SUM_TOL = 1e-9


def _as_f64(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class LogitVector:
    """Unnormalized per-token scores with an explicit masked set."""

    values: np.ndarray
    masked: np.ndarray

    def __init__(self, values, masked=None):
        vals = _as_f64(values).copy()
        if masked is None:
            msk = np.zeros(vals.shape[0], dtype=bool)
        else:
            msk = np.ascontiguousarray(masked, dtype=bool).copy()
        if msk.shape != vals.shape:
            raise DimensionError(
                f"mask length {msk.shape[0]} != values length {vals.shape[0]}"
            )
        if vals.shape[0] < 2:
            raise DimensionError("logit vector needs dimension >= 2")
        if bool(msk.all()):
            raise DegenerateDistributionError("all entries are masked")
        if not np.isfinite(vals[~msk]).all():
            raise DegenerateDistributionError("unmasked logits must be finite")
        vals.setflags(write=False)
        msk.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "masked", msk)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Normalized next-token distribution."""

    values: np.ndarray

    def __init__(self, values):
        vals = _as_f64(values).copy()
        if vals.shape[0] < 2:
            raise DimensionError("probability vector needs dimension >= 2")
        if not ((vals >= 0.0).all() and (vals <= 1.0).all()):
            raise DegenerateDistributionError("probabilities must lie in [0, 1]")
        total = float(np.sum(vals))
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise DegenerateDistributionError(
                f"probabilities sum to {total!r}, outside tolerance {PROB_SUM_TOL}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Vocabulary:
    """Dense token-id space with a designated end-of-sequence token."""

    size: int
    eos_id: int
    token_text: Optional[Mapping[int, str]] = field(default=None)

    def __post_init__(self):
        if self.size < 2:
            raise DimensionError("vocabulary size must be >= 2")
        if not 0 <= self.eos_id < self.size:
            raise DimensionError(
                f"eos_id {self.eos_id} outside vocabulary of size {self.size}"
            )

    def text_for(self, token_id: int) -> str:
        if self.token_text is not None and token_id in self.token_text:
            return self.token_text[token_id]
        return f"t{token_id}"

    def render(self, token_ids) -> str:
        """Space-joined display text, with the trailing EOS hidden."""
        ids = [t for t in token_ids]
        if ids and ids[-1] == self.eos_id:
            ids = ids[:-1]
        return " ".join(self.text_for(t) for t in ids)


def softmax(logits: LogitVector, temperature: float = 1.0) -> ProbVector:
    """Masked, numerically stable softmax at the given temperature."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    out = np.empty(logits.dim, dtype=np.float64)
    kernels.softmax_into(
        logits.values, logits.masked.view(np.uint8), float(temperature), out
    )
    return ProbVector(out)


def _check_dims(p: ProbVector, q: ProbVector) -> None:
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch: {p.dim} != {q.dim}")


def kl_divergence(p: ProbVector, q: ProbVector) -> float:
    """KL(P || Q) in bits. p_i = 0 terms contribute 0; q_i = 0 under
    p_i > 0 yields +inf."""
    _check_dims(p, q)
    return float(kernels.kl_div(p.values, q.values))


def js_divergence(p: ProbVector, q: ProbVector) -> float:
    """Jensen-Shannon divergence in bits; symmetric, bounded by [0, 1]."""
    _check_dims(p, q)
    return float(kernels.js_div(p.values, q.values))


def plausibility_mask(reference: ProbVector, beta: float) -> np.ndarray:
    """Boolean keep-set: token i survives iff reference_i >= beta * max.

    The argmax always survives (beta <= 1 guarantees beta*max <= max), so
    the keep-set is never empty.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    cutoff = beta * float(np.max(reference.values))
    return reference.values >= cutoff


def apply_mask(logits: LogitVector, keep: np.ndarray) -> LogitVector:
    """Mask out every token not in ``keep``; kept entries are unchanged
    bit for bit. Raises if nothing would remain unmasked."""
    keep = np.asarray(keep, dtype=bool)
    if keep.shape[0] != logits.dim:
        raise DimensionError(
            f"keep-set length {keep.shape[0]} != vector length {logits.dim}"
        )
    if not keep.any():
        raise DegenerateDistributionError("empty keep-set")
    new_mask = logits.masked | ~keep
    if bool(new_mask.all()):
        raise DegenerateDistributionError(
            "keep-set and masked entries leave no token available"
        )
    return LogitVector(logits.values, new_mask)
