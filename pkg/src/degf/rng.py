"""Deterministic random number generation with value semantics.

The generator is xoshiro256** seeded through splitmix64, implemented in
plain integer arithmetic so every platform and language binding can
reproduce the exact stream. State is an immutable 4-word value; every
draw returns (result, next_state) and never mutates anything.

Uniform doubles use the conventional 53-bit construction
``(x >> 11) * 2**-53`` which yields values in [0, 1).

``sample`` maps one uniform variate to a token id via the inverse-CDF
walk over token ids in ascending order with plain left-to-right
accumulation; zero-probability tokens are never selectable and, if
accumulated float error leaves the drawn variate above the final total,
the highest-id positive-probability token is returned. Greedy mode picks
the lowest-id maximum and consumes no variate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

MASK64 = (1 << 64) - 1

SAMPLING_MODES = ("multinomial", "greedy")


def splitmix64(state: int) -> Tuple[int, int]:
    """One splitmix64 step: returns (output, next_state)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z = z ^ (z >> 31)
    return z, state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


@dataclass(frozen=True)
class RngState:
    """Immutable xoshiro256** state (four 64-bit words)."""

    s0: int
    s1: int
    s2: int
    s3: int

    def __post_init__(self):
        for name in ("s0", "s1", "s2", "s3"):
            v = getattr(self, name)
            if not 0 <= v <= MASK64:
                raise ValueError(f"{name} out of 64-bit range: {v}")
        if self.s0 == self.s1 == self.s2 == self.s3 == 0:
            raise ValueError("all-zero state is invalid for xoshiro256**")


def seed_state(seed: int) -> RngState:
    """Expand a 64-bit seed into an RngState via four splitmix64 steps."""
    sm = seed & MASK64
    words = []
    for _ in range(4):
        out, sm = splitmix64(sm)
        words.append(out)
    return RngState(*words)


def next_u64(state: RngState) -> Tuple[int, RngState]:
    """One xoshiro256** step: returns (64-bit output, next state)."""
    result = (_rotl((state.s1 * 5) & MASK64, 7) * 9) & MASK64
    t = (state.s1 << 17) & MASK64
    s2 = state.s2 ^ state.s0
    s3 = state.s3 ^ state.s1
    s1 = state.s1 ^ s2
    s0 = state.s0 ^ s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return result, RngState(s0, s1, s2, s3)


def next_unit(state: RngState) -> Tuple[float, RngState]:
    """Uniform double in [0, 1): (x >> 11) * 2**-53."""
    x, state = next_u64(state)
    return (x >> 11) * 2.0**-53, state


def sample(p, mode: str, state: RngState) -> Tuple[int, RngState]:
    """Draw a token id from the distribution ``p``.

    multinomial: consumes exactly one uniform variate, inverse-CDF over
    ascending token ids. greedy: lowest-id argmax, consumes no variate.
    """
    probs = np.asarray(getattr(p, "values", p), dtype=np.float64)
    if mode == "greedy":
        return int(np.argmax(probs)), state
    if mode != "multinomial":
        raise ValueError(f"unknown sampling mode: {mode!r}")
    u, state = next_unit(state)
    acc = 0.0
    last_positive = -1
    n = probs.shape[0]
    for i in range(n):
        pi = float(probs[i])
        if pi <= 0.0:
            continue
        last_positive = i
        acc += pi
        if u < acc:
            return i, state
    if last_positive < 0:
        raise ValueError("no token has positive probability")
    return last_positive, state
