"""Deterministic in-process backend for tests, oracles, and fixtures.

Logits are a pure hash-mix of (scenario hash seed, image key, prompt,
prefix): a BLAKE2b digest of the canonically serialized query seeds a
splitmix64 stream, and each token's logit is ``base_scale * (2u - 1)``
with ``u`` the stream's next uniform in [0, 1). The same query always
produces the same vector, on any platform.

Scenarios can also script exact logit vectors for chosen steps, keyed by
prefix length plus either an exact image ref or a conditioning class.
Conditioning classes are derived from the image ref's shape:

- ``None``                  -> "none"        (text-only query)
- ``gen:...``               -> "generated"   (output of the paired generator)
- ``noise:<steps>:...``     -> "distorted"
- ``aug:<param>:...``       -> "augmented"
- anything else             -> "original"

Scripted entries match in priority order: exact image ref first, then
conditioning class, then the wildcard class "any". Unscripted queries
fall through to the hash mix.

Scenario documents serialize as versioned JSON (``degf-scenario/1``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from degf.errors import ConfigError, SchemaError
from degf.rng import splitmix64
from degf.vectors import LogitVector, Vocabulary

SCENARIO_SCHEMA = "degf-scenario/1"

CONDITIONING_CLASSES = ("any", "none", "original", "generated", "distorted", "augmented")


def conditioning_class(image_ref: Optional[str]) -> str:
    if image_ref is None:
        return "none"
    if image_ref.startswith("gen:"):
        return "generated"
    if image_ref.startswith("noise:"):
        return "distorted"
    if image_ref.startswith("aug:"):
        return "augmented"
    return "original"


@dataclass(frozen=True)
class ScriptedStep:
    """Exact logits to serve when prefix length == step and the query's
    conditioning matches."""

    step: int
    conditioning: str = "any"
    values: Tuple[float, ...] = ()
    masked: Tuple[bool, ...] = ()
    image_ref: Optional[str] = None

    def __post_init__(self):
        if self.step < 0:
            raise ConfigError(f"scripted step index must be >= 0, got {self.step}")
        if self.conditioning not in CONDITIONING_CLASSES:
            raise ConfigError(
                f"conditioning must be one of {CONDITIONING_CLASSES}, "
                f"got {self.conditioning!r}"
            )
        if not self.values:
            raise ConfigError("scripted step needs a logits vector")
        if self.masked and len(self.masked) != len(self.values):
            raise ConfigError("scripted mask length must equal logits length")


@dataclass(frozen=True)
class Scenario:
    """Complete description of a synthetic backend's behavior."""

    name: str
    vocab_size: int = 64
    eos_id: int = 0
    hash_seed: int = 0
    base_scale: float = 4.0
    image_sensitive: bool = True
    token_text: Optional[Mapping[int, str]] = None
    scripted: Tuple[ScriptedStep, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if not 0 <= self.eos_id < self.vocab_size:
            raise ConfigError(
                f"eos_id {self.eos_id} outside vocabulary of size {self.vocab_size}"
            )
        if not self.base_scale > 0:
            raise ConfigError(f"base_scale must be positive, got {self.base_scale}")
        for s in self.scripted:
            if len(s.values) != self.vocab_size:
                raise ConfigError(
                    f"scripted step {s.step}: logits length {len(s.values)} "
                    f"!= vocab_size {self.vocab_size}"
                )

    def to_json(self) -> dict:
        doc = {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "vocab_size": self.vocab_size,
            "eos_id": self.eos_id,
            "hash_seed": self.hash_seed,
            "base_scale": self.base_scale,
            "image_sensitive": self.image_sensitive,
        }
        if self.token_text is not None:
            doc["token_text"] = {str(k): v for k, v in self.token_text.items()}
        if self.scripted:
            doc["scripted"] = [
                {
                    "step": s.step,
                    "conditioning": s.conditioning,
                    "values": list(s.values),
                    **({"masked": list(s.masked)} if s.masked else {}),
                    **({"image_ref": s.image_ref} if s.image_ref is not None else {}),
                }
                for s in self.scripted
            ]
        return doc

    @staticmethod
    def from_json(doc: dict) -> "Scenario":
        if not isinstance(doc, dict) or doc.get("schema") != SCENARIO_SCHEMA:
            raise SchemaError(
                f"expected schema {SCENARIO_SCHEMA!r}, got {doc.get('schema')!r}"
                if isinstance(doc, dict)
                else "scenario document must be a JSON object"
            )
        try:
            token_text = None
            if "token_text" in doc:
                token_text = {int(k): str(v) for k, v in doc["token_text"].items()}
            scripted = tuple(
                ScriptedStep(
                    step=int(s["step"]),
                    conditioning=str(s.get("conditioning", "any")),
                    values=tuple(float(v) for v in s["values"]),
                    masked=tuple(bool(b) for b in s.get("masked", ())),
                    image_ref=s.get("image_ref"),
                )
                for s in doc.get("scripted", ())
            )
            return Scenario(
                name=str(doc["name"]),
                vocab_size=int(doc["vocab_size"]),
                eos_id=int(doc["eos_id"]),
                hash_seed=int(doc.get("hash_seed", 0)),
                base_scale=float(doc.get("base_scale", 4.0)),
                image_sensitive=bool(doc.get("image_sensitive", True)),
                token_text=token_text,
                scripted=scripted,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario document: {exc!r}") from exc


def _canonical_key(parts) -> bytes:
    return json.dumps(parts, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _digest_u64(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


class SyntheticGenerator:
    """Deterministic caption -> image-ref mapping standing in for a
    text-to-image model."""

    def __init__(self):
        self.generate_calls = 0

    def generate(self, caption: str, seed: int, steps: int) -> str:
        self.generate_calls += 1
        digest = hashlib.blake2b(
            _canonical_key([caption, int(seed), int(steps)]), digest_size=8
        ).hexdigest()
        return f"gen:{digest}"


class SyntheticBackend:
    """ModelBackend whose logits come from scripts or the hash mix."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._vocab = Vocabulary(
            size=scenario.vocab_size,
            eos_id=scenario.eos_id,
            token_text=scenario.token_text,
        )
        self._memo: Dict[tuple, Tuple[np.ndarray, np.ndarray]] = {}
        self.logits_calls = 0
        self.transform_calls = 0
        self.distort_calls = 0

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def _find_script(
        self, step: int, image_ref: Optional[str]
    ) -> Optional[ScriptedStep]:
        cls = conditioning_class(image_ref)
        at_step = [s for s in self.scenario.scripted if s.step == step]
        for s in at_step:
            if s.image_ref is not None and s.image_ref == image_ref:
                return s
        for s in at_step:
            if s.image_ref is None and s.conditioning == cls:
                return s
        for s in at_step:
            if s.image_ref is None and s.conditioning == "any":
                return s
        return None

    def _hash_mix(self, image_key: str, prompt: str, prefix: Tuple[int, ...]) -> np.ndarray:
        payload = _canonical_key(
            [self.scenario.hash_seed, image_key, prompt, list(prefix)]
        )
        sm = _digest_u64(payload)
        scale = self.scenario.base_scale
        vals = np.empty(self.scenario.vocab_size, dtype=np.float64)
        for i in range(self.scenario.vocab_size):
            x, sm = splitmix64(sm)
            u = (x >> 11) * 2.0**-53
            vals[i] = scale * (2.0 * u - 1.0)
        return vals

    def logits(
        self, image_ref: Optional[str], prompt: str, prefix_ids: Sequence[int]
    ) -> LogitVector:
        self.logits_calls += 1
        prefix = tuple(int(t) for t in prefix_ids)
        script = self._find_script(len(prefix), image_ref)
        if script is not None:
            masked = script.masked if script.masked else None
            return LogitVector(list(script.values), masked)
        image_key = ""
        if self.scenario.image_sensitive and image_ref is not None:
            image_key = image_ref
        memo_key = (image_key, prompt, prefix)
        vals = self._memo.get(memo_key)
        if vals is None:
            vals = self._hash_mix(image_key, prompt, prefix)
            self._memo[memo_key] = vals
        return LogitVector(vals)

    def transform(self, image_ref: str, param: int) -> str:
        self.transform_calls += 1
        return f"aug:{int(param)}:{image_ref}"

    def distort(self, image_ref: str, noise_steps: int) -> str:
        self.distort_calls += 1
        return f"noise:{int(noise_steps)}:{image_ref}"


def _near_point_logits(vocab_size: int, peak: int, height: float = 200.0) -> Tuple[float, ...]:
    """Logits whose softmax rounds to an exact point mass in float64,
    while every entry stays finite."""
    vals = [0.0] * vocab_size
    vals[peak] = height
    return tuple(vals)


def _pope6_scenario() -> Scenario:
    # Six images, scripted one-word answers followed by EOS. Paired with
    # the labels in the pope6 benchmark fixture this yields the confusion
    # matrix TP=2, FP=1, FN=1, TN=2.
    answers = {
        "img-a": 0,  # Yes
        "img-b": 0,  # Yes
        "img-c": 1,  # No
        "img-d": 1,  # No
        "img-e": 0,  # Yes
        "img-f": 1,  # No
    }
    scripted = []
    for ref, token in sorted(answers.items()):
        scripted.append(
            ScriptedStep(
                step=0,
                conditioning="original",
                values=_near_point_logits(4, token),
                image_ref=ref,
            )
        )
    scripted.append(
        ScriptedStep(step=1, conditioning="any", values=_near_point_logits(4, 3))
    )
    return Scenario(
        name="pope6",
        vocab_size=4,
        eos_id=3,
        hash_seed=6,
        token_text={0: "Yes", 1: "No", 2: "maybe", 3: "</s>"},
        scripted=tuple(scripted),
    )


def builtin_scenarios() -> Dict[str, Scenario]:
    return {
        "default": Scenario(name="default", vocab_size=64, eos_id=0, hash_seed=1),
        "identical": Scenario(
            name="identical",
            vocab_size=16,
            eos_id=15,
            hash_seed=2,
            image_sensitive=False,
        ),
        "disjoint@0": Scenario(
            name="disjoint@0",
            vocab_size=16,
            eos_id=15,
            hash_seed=3,
            scripted=(
                ScriptedStep(
                    step=0, conditioning="original", values=_near_point_logits(16, 1)
                ),
                ScriptedStep(
                    step=0, conditioning="generated", values=_near_point_logits(16, 2)
                ),
                ScriptedStep(
                    step=0, conditioning="any", values=_near_point_logits(16, 1)
                ),
            ),
        ),
        "tiny4": Scenario(
            name="tiny4", vocab_size=4, eos_id=3, hash_seed=4, base_scale=2.0
        ),
        "pope6": _pope6_scenario(),
    }


def load_scenario(spec: str) -> Scenario:
    """Resolve a scenario by builtin name or by path to a scenario JSON."""
    builtins = builtin_scenarios()
    if spec in builtins:
        return builtins[spec]
    path = Path(spec)
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load scenario file {spec}: {exc}") from exc
        return Scenario.from_json(doc)
    raise ConfigError(
        f"unknown scenario {spec!r}: not a builtin "
        f"({', '.join(sorted(builtins))}) and not a file"
    )


def synthetic_backend(spec: str) -> Tuple[SyntheticBackend, SyntheticGenerator]:
    """Build the paired deterministic backend and generator for a scenario
    named by builtin name or JSON path."""
    scenario = load_scenario(spec) if isinstance(spec, str) else spec
    return SyntheticBackend(scenario), SyntheticGenerator()
