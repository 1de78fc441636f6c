"""Divergence-gated decoding with generated visual feedback.

Per-token fusion of two evidence streams (the original image and a
synthesized visual reference), gated by the Jensen-Shannon divergence
between their next-token distributions; plus baseline contrast/reinforce
decoders, deterministic synthetic backends, benchmark metrics, trace
tooling, and an HTTP client for remote model adapters.
"""

from degf.config import DecodeConfig, build_config
from degf.decoding import (
    Branch,
    StepDecision,
    degf_step,
    m3id_coefficient,
    m3id_step,
    regular_step,
    ritual_step,
    vcd_step,
)
from degf.errors import (
    BackendUnavailableError,
    ConfigError,
    DegenerateDistributionError,
    DegfError,
    DimensionError,
    EmptyInputError,
    GeneratorUnavailableError,
    InsufficientDataError,
    MalformedSubsetError,
    MissingTruthError,
    ProtocolError,
    SchemaError,
    ValidationError,
)
from degf.kernels import BACKEND as KERNEL_BACKEND
from degf.pipeline import (
    DecodeResult,
    DecodeTrace,
    PhaseTimings,
    PromptPair,
    StepTrace,
    build_prompts,
    derive_seed,
    run_baseline,
    run_decode,
    run_degf,
    run_initial_query,
)
from degf.rng import RngState, next_u64, next_unit, sample, seed_state, splitmix64
from degf.synthetic import (
    Scenario,
    ScriptedStep,
    SyntheticBackend,
    SyntheticGenerator,
    builtin_scenarios,
    synthetic_backend,
)
from degf.vectors import (
    LogitVector,
    ProbVector,
    Vocabulary,
    apply_mask,
    js_divergence,
    kl_divergence,
    plausibility_mask,
    softmax,
)

__version__ = "0.1.0"

__all__ = [
    "BackendUnavailableError",
    "Branch",
    "ConfigError",
    "DecodeConfig",
    "DecodeResult",
    "DecodeTrace",
    "DegenerateDistributionError",
    "DegfError",
    "DimensionError",
    "EmptyInputError",
    "GeneratorUnavailableError",
    "InsufficientDataError",
    "KERNEL_BACKEND",
    "LogitVector",
    "MalformedSubsetError",
    "MissingTruthError",
    "PhaseTimings",
    "ProbVector",
    "PromptPair",
    "ProtocolError",
    "RngState",
    "Scenario",
    "SchemaError",
    "ScriptedStep",
    "StepDecision",
    "StepTrace",
    "SyntheticBackend",
    "SyntheticGenerator",
    "ValidationError",
    "Vocabulary",
    "apply_mask",
    "build_config",
    "build_prompts",
    "builtin_scenarios",
    "degf_step",
    "derive_seed",
    "js_divergence",
    "kl_divergence",
    "m3id_coefficient",
    "m3id_step",
    "next_u64",
    "next_unit",
    "plausibility_mask",
    "regular_step",
    "ritual_step",
    "run_baseline",
    "run_decode",
    "run_degf",
    "run_initial_query",
    "sample",
    "seed_state",
    "softmax",
    "splitmix64",
    "synthetic_backend",
    "vcd_step",
]
