"""Decode run configuration: defaults, validation, file/CLI merging.

Precedence when assembling a config is CLI flag > config file > default.
Config files are plain ``key=value`` lines; blank lines and lines whose
first non-space character is ``#`` are ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from degf.errors import ConfigError

DECODERS = ("regular", "degf", "vcd", "m3id", "ritual")
SAMPLING_MODES = ("multinomial", "greedy")

# Open-ended captioning conventionally runs with a looser plausibility
# cutoff than short-answer tasks.
BETA_DEFAULT = 0.25
BETA_OPEN_CAPTION = 0.1


@dataclass(frozen=True)
class DecodeConfig:
    decoder: str = "degf"
    alpha1: float = 3.0
    alpha2: float = 1.0
    gamma: float = 0.1
    beta: float = BETA_DEFAULT
    vcd_alpha: float = 1.0
    m3id_lambda: float = 0.02
    ritual_kappa: float = 3.0
    ritual_param: int = 0
    temperature: float = 1.0
    max_new_tokens: int = 64
    initial_max_tokens: int = 128
    diffusion_steps: int = 50
    seed: int = 0
    sampling: str = "multinomial"

    def __post_init__(self):
        if self.decoder not in DECODERS:
            raise ConfigError(
                f"decoder must be one of {DECODERS}, got {self.decoder!r}"
            )
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(
                f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}"
            )
        for name in ("alpha1", "alpha2", "vcd_alpha", "m3id_lambda", "ritual_kappa"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v >= 0.0:
                raise ConfigError(f"{name} must be a number >= 0, got {v!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta!r}")
        if not self.temperature > 0.0:
            raise ConfigError(
                f"temperature must be positive, got {self.temperature!r}"
            )
        for name in ("max_new_tokens", "initial_max_tokens", "diffusion_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not isinstance(self.ritual_param, int) or isinstance(self.ritual_param, bool):
            raise ConfigError(f"ritual_param must be an integer, got {self.ritual_param!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed!r}")


_FIELD_TYPES: Dict[str, type] = {
    f.name: f.type for f in dataclasses.fields(DecodeConfig)  # type: ignore[misc]
}

_INT_FIELDS = {
    "max_new_tokens",
    "initial_max_tokens",
    "diffusion_steps",
    "seed",
    "ritual_param",
}
_FLOAT_FIELDS = {
    "alpha1",
    "alpha2",
    "gamma",
    "beta",
    "vcd_alpha",
    "m3id_lambda",
    "ritual_kappa",
    "temperature",
}
_STR_FIELDS = {"decoder", "sampling"}


def _coerce(name: str, raw: Any) -> Any:
    if name in _STR_FIELDS:
        return str(raw)
    try:
        if name in _INT_FIELDS:
            if isinstance(raw, str):
                return int(raw, 0)
            if isinstance(raw, int) and not isinstance(raw, bool):
                return raw
            raise ValueError(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse value for {name}: {raw!r}") from None
    raise ConfigError(f"unknown config key: {name!r}")


def parse_config_file(path: Path) -> Dict[str, Any]:
    """Read ``key=value`` lines into a coerced mapping (no defaults)."""
    out: Dict[str, Any] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def build_config(
    overrides: Optional[Mapping[str, Any]] = None,
    file_values: Optional[Mapping[str, Any]] = None,
) -> DecodeConfig:
    """Assemble a DecodeConfig, with overrides beating file values."""
    merged: Dict[str, Any] = {}
    for source in (file_values, overrides):
        if not source:
            continue
        for key, value in source.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key: {key!r}")
            merged[key] = _coerce(key, value)
    return DecodeConfig(**merged)
