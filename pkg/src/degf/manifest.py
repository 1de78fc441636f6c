"""Run manifests: what ran, with which config, producing which files.

A manifest is written for every CLI run — including partial failures —
so a run directory is always self-describing. The run key hashes the
config snapshot, dataset identity, and package version; two runs with an
identical key on a deterministic backend produce byte-identical outputs.

Wall-clock phase timings live here, not in trace files, which keeps
traces byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from degf.errors import SchemaError

MANIFEST_SCHEMA = "degf-manifest/1"


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("degf")
    except Exception:
        return "unknown"


@dataclass
class RunManifest:
    command: str
    config: dict
    backend: str
    dataset: Optional[str] = None
    output_dir: Optional[str] = None
    version: str = field(default_factory=_package_version)
    timings_s: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    complete: bool = True
    error: Optional[str] = None
    schema: str = MANIFEST_SCHEMA

    def run_key(self) -> str:
        """Stable hash over config + dataset + code version."""
        payload = json.dumps(
            [self.command, self.config, self.backend, self.dataset, self.version],
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        ).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "command": self.command,
            "run_key": self.run_key(),
            "config": dict(self.config),
            "backend": self.backend,
            "dataset": self.dataset,
            "output_dir": self.output_dir,
            "version": self.version,
            "timings_s": dict(self.timings_s),
            "artifacts": list(self.artifacts),
            "complete": self.complete,
            "error": self.error,
        }

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def read_manifest(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MANIFEST_SCHEMA:
        raise SchemaError(f"{path}: expected schema {MANIFEST_SCHEMA!r}")
    return doc
