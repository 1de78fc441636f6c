"""Two-query decode orchestration over abstract backends.

The feedback-gated procedure runs in three phases per instance:

1. initial pass — plain decoding conditioned on the original image,
   capped at ``initial_max_tokens``, producing a draft response;
2. feedback synthesis — one text-to-image call turns the draft into an
   auxiliary reference image;
3. final pass — an autoregressive loop that queries logits under both
   images at every position and fuses them per the configured decoder.

Baseline decoders run a single pass, taking their second evidence stream
from a distorted image (vcd), a text-only query (m3id), or an augmented
image (ritual).

Determinism contract: one RNG stream per decode, seeded from cfg.seed;
the final pass continues the stream the initial pass advanced. The
feedback image's noise seed is derived from cfg.seed by a tagged hash so
it does not perturb the sampling stream. Emitted responses include the
terminating EOS token when one fired, so every logits call maps to
exactly one traced step: a gated decode issues len(initial) + 2 *
len(final) logits calls and one generator call.

Wall-clock phase timings are measured but kept out of the trace (they go
into the run manifest), so trace files are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from degf.config import DecodeConfig
from degf.decoding import (
    StepDecision,
    degf_step,
    m3id_step,
    regular_step,
    ritual_step,
    vcd_step,
)
from degf.errors import (
    BackendUnavailableError,
    GeneratorUnavailableError,
    ValidationError,
)
from degf.rng import RngState, sample, seed_state
from degf.vectors import ProbVector, Vocabulary, softmax

TRACE_SCHEMA = "degf-trace/1"

# The distorted-image evidence stream always uses this many forward-noise
# steps, independent of the feedback generator's step count.
VCD_NOISE_STEPS = 500

TOP_K = 10

BENCHMARK_KINDS = ("yes_no", "open_caption", "binary_choice")

DETAIL_SUFFIX = "Briefly describe relevant details."


@dataclass(frozen=True)
class PromptPair:
    """first: prompt for the draft-eliciting query; second: untouched base
    prompt used by every final-pass query."""

    first: str
    second: str


def build_prompts(benchmark_kind: Optional[str], base_prompt: str) -> PromptPair:
    """Prompt policy per task family: short-answer kinds (yes_no,
    binary_choice) append a detail-eliciting sentence to the FIRST query
    only; open captioning keeps the base prompt; the final pass always
    uses the base prompt verbatim."""
    if not base_prompt:
        raise ValidationError("base prompt must be nonempty")
    if benchmark_kind is not None and benchmark_kind not in BENCHMARK_KINDS:
        raise ValidationError(
            f"benchmark kind must be one of {BENCHMARK_KINDS}, got {benchmark_kind!r}"
        )
    if benchmark_kind in ("yes_no", "binary_choice"):
        return PromptPair(f"{base_prompt} {DETAIL_SUFFIX}", base_prompt)
    return PromptPair(base_prompt, base_prompt)


class ModelBackend(Protocol):
    def vocabulary(self) -> Vocabulary: ...

    def logits(
        self, image_ref: Optional[str], prompt: str, prefix_ids: Sequence[int]
    ): ...

    def transform(self, image_ref: str, param: int) -> str: ...

    def distort(self, image_ref: str, noise_steps: int) -> str: ...


class VisualGenerator(Protocol):
    def generate(self, caption: str, seed: int, steps: int) -> str: ...


@dataclass(frozen=True)
class StepTrace:
    t: int
    d_t: float
    branch: str
    keep_set_size: int
    token: int
    top_p: List[Tuple[int, float]]
    top_p_prime: Optional[List[Tuple[int, float]]] = None


@dataclass
class DecodeTrace:
    decoder: str
    config: dict
    prompt: str
    image_ref: Optional[str]
    initial_response: List[int] = field(default_factory=list)
    generated_image_ref: Optional[str] = None
    steps: List[StepTrace] = field(default_factory=list)
    final_response: List[int] = field(default_factory=list)
    complete: bool = True
    error: Optional[str] = None
    schema: str = TRACE_SCHEMA


@dataclass(frozen=True)
class PhaseTimings:
    """Wall-clock seconds per phase; zeros for phases a decoder skips."""

    initial_s: float = 0.0
    generate_s: float = 0.0
    final_s: float = 0.0


@dataclass(frozen=True)
class DecodeResult:
    trace: DecodeTrace
    timings: PhaseTimings
    final_text: str


@dataclass(frozen=True)
class InitialPass:
    tokens: List[int]
    steps: List[StepTrace]
    state: RngState
    truncated: bool


def derive_seed(seed: int, tag: str) -> int:
    """Stable 64-bit sub-seed for an independent purpose (an instance, the
    feedback image's noise draw, a sweep repeat)."""
    payload = seed.to_bytes(8, "little") + b"\x00" + tag.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _top_k(p: Optional[ProbVector], k: int = TOP_K) -> Optional[List[Tuple[int, float]]]:
    if p is None:
        return None
    n = p.dim
    order = np.lexsort((np.arange(n), -p.values))
    return [(int(i), float(p.values[i])) for i in order[: min(k, n)]]


def _decode_loop(
    step_fn: Callable[[int, List[int]], StepDecision],
    vocab: Vocabulary,
    cfg: DecodeConfig,
    state: RngState,
    cap: int,
) -> Tuple[List[int], List[StepTrace], RngState, bool]:
    """Shared autoregressive loop: fuse, sample, trace, stop on EOS/cap."""
    tokens: List[int] = []
    steps: List[StepTrace] = []
    truncated = True
    for t in range(cap):
        decision = step_fn(t, tokens)
        probs = softmax(decision.fused, cfg.temperature)
        token, state = sample(probs, cfg.sampling, state)
        steps.append(
            StepTrace(
                t=t,
                d_t=decision.distance,
                branch=decision.branch.value,
                keep_set_size=decision.keep_set_size,
                token=token,
                top_p=_top_k(decision.p),
                top_p_prime=_top_k(decision.p_prime),
            )
        )
        tokens.append(token)
        if token == vocab.eos_id:
            truncated = False
            break
    return tokens, steps, state, truncated


def run_initial_query(
    backend: ModelBackend,
    image_ref: Optional[str],
    prompt: str,
    cfg: DecodeConfig,
    state: Optional[RngState] = None,
) -> InitialPass:
    """Plain decode conditioned on the original image only, capped at
    cfg.initial_max_tokens. Hitting the cap is not an error; it is
    recorded as truncation."""
    if not prompt:
        raise ValidationError("prompt must be nonempty")
    vocab = backend.vocabulary()
    if state is None:
        state = seed_state(cfg.seed)

    def step_fn(t: int, prefix: List[int]) -> StepDecision:
        f_v = backend.logits(image_ref, prompt, prefix)
        return regular_step(f_v, cfg)

    tokens, steps, state, truncated = _decode_loop(
        step_fn, vocab, cfg, state, cfg.initial_max_tokens
    )
    return InitialPass(tokens=tokens, steps=steps, state=state, truncated=truncated)


def _snapshot(cfg: DecodeConfig) -> dict:
    import dataclasses

    return dataclasses.asdict(cfg)


def run_degf(
    backend: ModelBackend,
    generator: VisualGenerator,
    image_ref: Optional[str],
    prompt: str,
    cfg: DecodeConfig,
    benchmark_kind: Optional[str] = None,
) -> DecodeResult:
    """Full two-query procedure with divergence-gated fusion.

    A generator failure aborts the run but still returns the partial
    trace, marked incomplete, so callers can persist it.
    """
    prompts = build_prompts(benchmark_kind, prompt)
    vocab = backend.vocabulary()
    trace = DecodeTrace(
        decoder="degf", config=_snapshot(cfg), prompt=prompt, image_ref=image_ref
    )

    t0 = time.perf_counter()
    initial = run_initial_query(backend, image_ref, prompts.first, cfg)
    t1 = time.perf_counter()
    trace.initial_response = initial.tokens

    caption = vocab.render(initial.tokens)
    try:
        generated_ref = generator.generate(
            caption, derive_seed(cfg.seed, "feedback-image"), cfg.diffusion_steps
        )
    except GeneratorUnavailableError as exc:
        t2 = time.perf_counter()
        trace.complete = False
        trace.error = str(exc)
        return DecodeResult(
            trace=trace,
            timings=PhaseTimings(initial_s=t1 - t0, generate_s=t2 - t1),
            final_text="",
        )
    t2 = time.perf_counter()
    trace.generated_image_ref = generated_ref

    def step_fn(t: int, prefix: List[int]) -> StepDecision:
        f_v = backend.logits(image_ref, prompts.second, prefix)
        f_vprime = backend.logits(generated_ref, prompts.second, prefix)
        return degf_step(f_v, f_vprime, cfg)

    try:
        tokens, steps, _, _ = _decode_loop(
            step_fn, vocab, cfg, initial.state, cfg.max_new_tokens
        )
    except BackendUnavailableError as exc:
        trace.complete = False
        trace.error = str(exc)
        t3 = time.perf_counter()
        return DecodeResult(
            trace=trace,
            timings=PhaseTimings(t1 - t0, t2 - t1, t3 - t2),
            final_text="",
        )
    t3 = time.perf_counter()
    trace.steps = steps
    trace.final_response = tokens
    return DecodeResult(
        trace=trace,
        timings=PhaseTimings(initial_s=t1 - t0, generate_s=t2 - t1, final_s=t3 - t2),
        final_text=vocab.render(tokens),
    )


def run_baseline(
    backend: ModelBackend,
    image_ref: Optional[str],
    prompt: str,
    cfg: DecodeConfig,
    benchmark_kind: Optional[str] = None,
) -> DecodeResult:
    """Single-pass decode for regular/vcd/m3id/ritual. Baselines have no
    draft-eliciting query, so they use the base prompt."""
    if cfg.decoder not in ("regular", "vcd", "m3id", "ritual"):
        raise ValidationError(f"not a single-pass decoder: {cfg.decoder!r}")
    prompts = build_prompts(benchmark_kind, prompt)
    base = prompts.second
    vocab = backend.vocabulary()
    trace = DecodeTrace(
        decoder=cfg.decoder, config=_snapshot(cfg), prompt=prompt, image_ref=image_ref
    )

    second_ref: Optional[str] = None
    if cfg.decoder == "vcd":
        if image_ref is None:
            raise ValidationError("vcd needs an image to distort")
        second_ref = backend.distort(image_ref, VCD_NOISE_STEPS)
        trace.generated_image_ref = second_ref
    elif cfg.decoder == "ritual":
        if image_ref is None:
            raise ValidationError("ritual needs an image to augment")
        second_ref = backend.transform(image_ref, cfg.ritual_param)
        trace.generated_image_ref = second_ref

    def step_fn(t: int, prefix: List[int]) -> StepDecision:
        f_v = backend.logits(image_ref, base, prefix)
        if cfg.decoder == "regular":
            return regular_step(f_v, cfg)
        if cfg.decoder == "vcd":
            return vcd_step(f_v, backend.logits(second_ref, base, prefix), cfg)
        if cfg.decoder == "m3id":
            return m3id_step(f_v, backend.logits(None, base, prefix), t, cfg)
        return ritual_step(f_v, backend.logits(second_ref, base, prefix), cfg)

    state = seed_state(cfg.seed)
    t0 = time.perf_counter()
    try:
        tokens, steps, _, _ = _decode_loop(
            step_fn, vocab, cfg, state, cfg.max_new_tokens
        )
    except BackendUnavailableError as exc:
        trace.complete = False
        trace.error = str(exc)
        t1 = time.perf_counter()
        return DecodeResult(
            trace=trace, timings=PhaseTimings(final_s=t1 - t0), final_text=""
        )
    t1 = time.perf_counter()
    trace.steps = steps
    trace.final_response = tokens
    return DecodeResult(
        trace=trace,
        timings=PhaseTimings(final_s=t1 - t0),
        final_text=vocab.render(tokens),
    )


def run_decode(
    backend: ModelBackend,
    generator: Optional[VisualGenerator],
    image_ref: Optional[str],
    prompt: str,
    cfg: DecodeConfig,
    benchmark_kind: Optional[str] = None,
) -> DecodeResult:
    """Dispatch to the gated two-query procedure or a single-pass
    baseline, per cfg.decoder."""
    if cfg.decoder == "degf":
        if generator is None:
            raise ValidationError("the gated decoder needs a visual generator")
        return run_degf(backend, generator, image_ref, prompt, cfg, benchmark_kind)
    return run_baseline(backend, image_ref, prompt, cfg, benchmark_kind)
