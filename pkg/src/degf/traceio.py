"""Trace serialization: canonical JSON lines, byte-reproducible.

Writer rules (the canon):
- object keys in fixed, documented order (construction order below);
- compact separators, UTF-8, no ASCII escaping of non-ASCII text;
- floats rendered with %.17g so every double round-trips exactly;
- NaN/Inf never serialized — their appearance is a SchemaError.

Every line is one trace object carrying ``"schema": "degf-trace/1"``.
Readers reject other schema values by file name and line number, and
ignore unknown extra fields.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, List, Union

from degf.errors import SchemaError
from degf.pipeline import TRACE_SCHEMA, DecodeTrace, StepTrace


def _encode(obj, parts: List[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise SchemaError(f"non-finite float cannot be serialized: {obj!r}")
        parts.append("%.17g" % obj)
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        parts.append("{")
        first = True
        for key, value in obj.items():
            if not isinstance(key, str):
                raise SchemaError(f"object keys must be strings, got {key!r}")
            if not first:
                parts.append(",")
            first = False
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _encode(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _encode(value, parts)
        parts.append("]")
    else:
        raise SchemaError(f"cannot serialize {type(obj).__name__}: {obj!r}")


def canonical_json(obj) -> str:
    """Deterministic JSON rendering: fixed key order (insertion order of
    the dict), compact separators, %.17g floats."""
    parts: List[str] = []
    _encode(obj, parts)
    return "".join(parts)


def _step_to_dict(step: StepTrace) -> dict:
    doc = {
        "t": step.t,
        "d_t": float(step.d_t),
        "branch": step.branch,
        "keep_set_size": step.keep_set_size,
        "token": step.token,
        "top_p": [[i, float(p)] for i, p in step.top_p],
    }
    if step.top_p_prime is None:
        doc["top_p_prime"] = None
    else:
        doc["top_p_prime"] = [[i, float(p)] for i, p in step.top_p_prime]
    return doc


def trace_to_dict(trace: DecodeTrace) -> dict:
    return {
        "schema": trace.schema,
        "decoder": trace.decoder,
        "config": dict(trace.config),
        "prompt": trace.prompt,
        "image_ref": trace.image_ref,
        "initial_response": list(trace.initial_response),
        "generated_image_ref": trace.generated_image_ref,
        "steps": [_step_to_dict(s) for s in trace.steps],
        "final_response": list(trace.final_response),
        "complete": trace.complete,
        "error": trace.error,
    }


def _step_from_dict(doc: dict) -> StepTrace:
    tpp = doc.get("top_p_prime")
    return StepTrace(
        t=int(doc["t"]),
        d_t=float(doc["d_t"]),
        branch=str(doc["branch"]),
        keep_set_size=int(doc["keep_set_size"]),
        token=int(doc["token"]),
        top_p=[(int(i), float(p)) for i, p in doc["top_p"]],
        top_p_prime=None if tpp is None else [(int(i), float(p)) for i, p in tpp],
    )


def trace_from_dict(doc: dict, where: str = "<memory>") -> DecodeTrace:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: trace line must be a JSON object")
    schema = doc.get("schema")
    if schema != TRACE_SCHEMA:
        raise SchemaError(
            f"{where}: expected schema {TRACE_SCHEMA!r}, got {schema!r}"
        )
    try:
        return DecodeTrace(
            decoder=str(doc["decoder"]),
            config=dict(doc["config"]),
            prompt=str(doc["prompt"]),
            image_ref=doc.get("image_ref"),
            initial_response=[int(t) for t in doc["initial_response"]],
            generated_image_ref=doc.get("generated_image_ref"),
            steps=[_step_from_dict(s) for s in doc["steps"]],
            final_response=[int(t) for t in doc["final_response"]],
            complete=bool(doc.get("complete", True)),
            error=doc.get("error"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed trace: {exc!r}") from exc


def render_trace_line(trace: DecodeTrace) -> str:
    return canonical_json(trace_to_dict(trace))


def write_traces(path: Union[str, Path], traces: Iterable[DecodeTrace]) -> None:
    lines = [render_trace_line(t) for t in traces]
    Path(path).write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8"
    )


def read_traces(path: Union[str, Path]) -> List[DecodeTrace]:
    path = Path(path)
    out: List[DecodeTrace] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read trace file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        out.append(trace_from_dict(doc, where=f"{path}:{lineno}"))
    return out
