"""Reference echo-mode semantics for adapter implementations.

Echo mode lets protocol contract tests run against any adapter with no
models loaded. Every response is a pure function of the request, defined
here once so independent implementations (in any language) agree to the
bit:

- Canonical form of a request is compact JSON (no spaces, UTF-8, no
  ASCII escaping) of a tagged field list, e.g.
  ``["logits", image_ref, prompt, prefix_ids]``.
- ``/logits``: let D = SHA-256 hex digest of the canonical form. For
  token i, h_i = SHA-256 hex of ``D + ":" + str(i)`` and
  u32_i = first 8 hex chars of h_i as an integer. Token i is masked iff
  u32_i % 97 == 0; otherwise its logit is ``(u32_i >> 8) / 2**21 - 4.0``,
  a value in [-4, 4) exactly representable in float32 (and therefore
  exact through JSON in both directions). If every token masks (not
  reachable at vocabulary 32, but defined), token 0 is unmasked with
  logit 0.0.
- Image refs: ``"echo-img-" + SHA-256 hex of the canonical form, first
  16 chars``, with forms ``["txt2img", caption, seed, steps]`` and
  ``["transform", image_ref, kind, param]``.
- ``/meta``: vocabulary 32, EOS id 0, names below, logits are f32,
  deterministic true.

Seeds appear in canonical forms as plain JSON integers; clients keep
them below 2**53 so every language parses them exactly.
"""

from __future__ import annotations

import hashlib
import json
from typing import List, Optional, Sequence, Tuple

ECHO_VOCAB_SIZE = 32
ECHO_EOS_ID = 0
ECHO_MODEL_NAME = "echo-model"
ECHO_GENERATOR_NAME = "echo-generator"
ECHO_MASK_MODULUS = 97


def canonical_form(parts) -> bytes:
    return json.dumps(parts, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def echo_logits(
    image_ref: Optional[str], prompt: str, prefix_ids: Sequence[int]
) -> Tuple[List[float], List[bool]]:
    """Deterministic logit vector for a /logits request."""
    digest = hashlib.sha256(
        canonical_form(["logits", image_ref, prompt, list(prefix_ids)])
    ).hexdigest()
    values: List[float] = []
    masked: List[bool] = []
    for i in range(ECHO_VOCAB_SIZE):
        h = hashlib.sha256(f"{digest}:{i}".encode("utf-8")).hexdigest()
        u32 = int(h[:8], 16)
        if u32 % ECHO_MASK_MODULUS == 0:
            values.append(0.0)
            masked.append(True)
        else:
            values.append((u32 >> 8) / 2.0**21 - 4.0)
            masked.append(False)
    if all(masked):
        values[0] = 0.0
        masked[0] = False
    return values, masked


def echo_image_ref(tag: str, *fields) -> str:
    digest = hashlib.sha256(canonical_form([tag, *fields])).hexdigest()
    return f"echo-img-{digest[:16]}"


def echo_txt2img_ref(caption: str, seed: int, steps: int) -> str:
    return echo_image_ref("txt2img", caption, int(seed), int(steps))


def echo_transform_ref(image_ref: str, kind: str, param: int) -> str:
    return echo_image_ref("transform", image_ref, kind, int(param))


def echo_meta() -> dict:
    return {
        "vocab_size": ECHO_VOCAB_SIZE,
        "eos_id": ECHO_EOS_ID,
        "model_name": ECHO_MODEL_NAME,
        "generator_name": ECHO_GENERATOR_NAME,
        "logit_dtype": "f32",
        "deterministic": True,
    }


def echo_logits_wire(
    image_ref: Optional[str], prompt: str, prefix_ids: Sequence[int]
) -> List[object]:
    """The /logits response array: numbers, with masked slots as the JSON
    string "-inf"."""
    values, masked = echo_logits(image_ref, prompt, prefix_ids)
    return ["-inf" if m else v for v, m in zip(values, masked)]
