"""Operator entry point: decode runs, benchmark sweeps, trace analysis,
report comparison.

Exit codes are stable: 0 success, 2 usage/config/schema problems, 3
backend or generator failures at runtime. Partial outputs (traces,
manifests) are persisted before a nonzero exit so failed runs stay
inspectable.

Backend selector grammar: ``synthetic:<builtin-or-json-path>`` or an
``http(s)://`` URL (the ``http:<url>`` spelling is also accepted). When
``--backend`` is omitted the DEGF_ADAPTER_URL environment variable, if
set, supplies the URL; otherwise the hermetic ``synthetic:default``
backend is used.

Benchmark sweeps: the float hyperparameter flags accept comma-separated
value lists; the cross product of all swept flags defines the report
rows. ``--seeds a,b,c`` repeats every row per seed and reports mean and
standard deviation per metric. Instances parallelize up to ``--parallel``
within a row; per-instance seeds are derived from (row seed, instance
id), so parallel order never changes results and ``--resume`` can skip
already-completed instances.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from degf.config import DecodeConfig, build_config, parse_config_file
from degf.errors import (
    BackendUnavailableError,
    ConfigError,
    DegfError,
    GeneratorUnavailableError,
    ProtocolError,
    SchemaError,
    ValidationError,
)
from degf.manifest import RunManifest
from degf.metrics import (
    BenchmarkRecord,
    chair_scores,
    load_synonyms,
    mme_score,
    pope_scores,
    read_records,
    render_table,
    trace_divergence_stats,
    write_records,
)
from degf.pipeline import derive_seed, run_decode
from degf.traceio import canonical_json, read_traces, write_traces

REPORT_SCHEMA = "degf-report/1"

USAGE_EXIT = 2
RUNTIME_EXIT = 3

SWEEPABLE = (
    "alpha1",
    "alpha2",
    "gamma",
    "beta",
    "vcd_alpha",
    "m3id_lambda",
    "ritual_kappa",
    "temperature",
)


def resolve_backend(spec: str):
    """Return (backend, generator, descriptor) for a backend selector."""
    from degf import synthetic as syn

    if spec.startswith("synthetic:"):
        name = spec[len("synthetic:") :]
        backend, generator = syn.synthetic_backend(name)
        return backend, generator, f"synthetic:{backend.scenario.name}"
    url = spec
    if url.startswith("http:") and not url.startswith("http://"):
        url = url[len("http:") :]
    if not (url.startswith("http://") or url.startswith("https://")):
        if spec.startswith("http:"):
            url = "http://" + url
        else:
            raise ConfigError(
                f"backend must be synthetic:<scenario> or an http(s) URL, got {spec!r}"
            )
    from degf.httpadapter import AdapterClient, AdapterEndpoint

    client = AdapterClient(AdapterEndpoint(base_url=url))
    return client, client, url


def _default_backend() -> str:
    env = os.environ.get("DEGF_ADAPTER_URL", "").strip()
    return env if env else "synthetic:default"


def _add_hyperparam_flags(p: argparse.ArgumentParser, sweepable: bool) -> None:
    note = " (comma list sweeps)" if sweepable else ""
    for name in SWEEPABLE:
        p.add_argument(f"--{name.replace('_', '-')}", type=str, default=None,
                       help=f"decoder hyperparameter {name}{note}")
    p.add_argument("--max-new-tokens", type=int, default=None)
    p.add_argument("--initial-max-tokens", type=int, default=None)
    p.add_argument("--diffusion-steps", type=int, default=None)
    p.add_argument("--ritual-param", type=int, default=None)
    p.add_argument("--sampling", choices=("multinomial", "greedy"), default=None)
    p.add_argument("--config", type=str, default=None, help="key=value config file")


def _parse_float(name: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"--{name.replace('_', '-')}: not a number: {raw!r}") from None


def _collect_overrides(args, *, allow_sweep: bool) -> Tuple[dict, Dict[str, List[float]]]:
    """Split CLI values into scalar overrides and sweep lists."""
    overrides: dict = {}
    sweeps: Dict[str, List[float]] = {}
    for name in SWEEPABLE:
        raw = getattr(args, name)
        if raw is None:
            continue
        if "," in raw:
            if not allow_sweep:
                raise ConfigError(f"--{name.replace('_', '-')}: comma lists are only "
                                  f"valid in bench sweeps")
            sweeps[name] = [_parse_float(name, v) for v in raw.split(",") if v != ""]
        else:
            overrides[name] = _parse_float(name, raw)
    for name in ("max_new_tokens", "initial_max_tokens", "diffusion_steps",
                 "ritual_param", "sampling"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return overrides, sweeps


def _build_cfg(args, overrides: dict) -> DecodeConfig:
    file_values = parse_config_file(Path(args.config)) if args.config else None
    return build_config(overrides=overrides, file_values=file_values)


def _score_records(score: str, records, truth_path: Optional[str],
                   synonyms_path: Optional[str]) -> dict:
    if score == "pope":
        return pope_scores(records)
    if score == "mme":
        return mme_score(records)
    if score == "chair":
        if not truth_path:
            raise ConfigError("chair scoring needs --truth <per-image objects JSON>")
        truth_doc = json.loads(Path(truth_path).read_text(encoding="utf-8"))
        truth = {str(k): list(v) for k, v in truth_doc.items()}
        synonyms = load_synonyms(synonyms_path) if synonyms_path else None
        return chair_scores(records, truth, synonyms)
    raise ConfigError(f"unknown scorer {score!r}")


# ---------------------------------------------------------------- decode

def cmd_decode(args) -> int:
    overrides, _ = _collect_overrides(args, allow_sweep=False)
    overrides["decoder"] = args.decoder
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = _build_cfg(args, overrides)
    backend, generator, descriptor = resolve_backend(args.backend)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.jsonl"
    manifest_path = out_dir / "manifest.json"
    manifest = RunManifest(
        command="decode",
        config=_cfg_as_dict(cfg),
        backend=descriptor,
        output_dir=str(out_dir),
    )

    result = run_decode(backend, generator, args.image, args.prompt, cfg,
                        benchmark_kind=args.kind)
    write_traces(trace_path, [result.trace])
    manifest.artifacts.append(str(trace_path))
    manifest.timings_s = {
        "initial": result.timings.initial_s,
        "generate": result.timings.generate_s,
        "final": result.timings.final_s,
    }
    manifest.complete = result.trace.complete
    manifest.error = result.trace.error
    manifest.write(manifest_path)
    if not result.trace.complete:
        print(f"error: {result.trace.error}", file=sys.stderr)
        return RUNTIME_EXIT
    print(result.final_text)
    return 0


# ---------------------------------------------------------------- bench

def _run_instance(backend, generator, record: BenchmarkRecord, cfg: DecodeConfig,
                  kind: str) -> Tuple[BenchmarkRecord, object]:
    inst_cfg = build_config(overrides={"seed": derive_seed(cfg.seed, record.instance_id)},
                            file_values=_cfg_as_dict(cfg))
    result = run_decode(backend, generator, record.image_id, record.question,
                        inst_cfg, benchmark_kind=kind)
    import dataclasses

    filled = dataclasses.replace(record, response=result.final_text,
                                 trace_ref=record.instance_id)
    return filled, result.trace


def _cfg_as_dict(cfg: DecodeConfig) -> dict:
    import dataclasses

    return dataclasses.asdict(cfg)


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def cmd_bench(args) -> int:
    overrides, sweeps = _collect_overrides(args, allow_sweep=True)
    overrides["decoder"] = args.decoder
    base_cfg = _build_cfg(args, overrides)

    dataset = read_records(args.dataset)
    if not dataset:
        raise SchemaError(f"{args.dataset}: dataset has no records")
    kinds = {r.benchmark_kind for r in dataset}
    if kinds != {args.kind}:
        raise SchemaError(
            f"{args.dataset}: records are {sorted(kinds)}, expected [{args.kind}]"
        )
    score = args.score or {"yes_no": "pope", "binary_choice": "pope",
                           "open_caption": "chair"}[args.kind]

    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base_cfg.seed]
    backend, generator, descriptor = resolve_backend(args.backend)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    sweep_names = sorted(sweeps)
    combos = list(itertools.product(*(sweeps[n] for n in sweep_names))) or [()]

    rows = []
    artifacts: List[str] = []
    for row_idx, combo in enumerate(combos):
        params = dict(zip(sweep_names, combo))
        row_cfg = build_config(overrides=params, file_values=_cfg_as_dict(base_cfg))
        per_seed = []
        for seed in seeds:
            seed_cfg = build_config(overrides={"seed": seed},
                                    file_values=_cfg_as_dict(row_cfg))
            rec_path = out_dir / f"records_row{row_idx:02d}_seed{seed}.jsonl"
            trace_path = out_dir / f"traces_row{row_idx:02d}_seed{seed}.jsonl"
            done: Dict[str, BenchmarkRecord] = {}
            if args.resume and rec_path.exists():
                done = {r.instance_id: r for r in read_records(rec_path)}
            todo = [r for r in dataset if r.instance_id not in done]
            traces = []
            if todo:
                with ThreadPoolExecutor(max_workers=args.parallel) as pool:
                    futures = [
                        pool.submit(_run_instance, backend, generator, rec,
                                    seed_cfg, args.kind)
                        for rec in todo
                    ]
                    for fut in futures:
                        rec, trace = fut.result()
                        done[rec.instance_id] = rec
                        traces.append(trace)
            records = sorted(done.values(), key=lambda r: r.instance_id)
            write_records(rec_path, records)
            if traces:
                write_traces(trace_path, traces)
                artifacts.append(str(trace_path))
            artifacts.append(str(rec_path))
            metrics = _score_records(score, records, args.truth, args.synonyms)
            per_seed.append({"seed": seed, "metrics": metrics})
        scalar_names = [k for k, v in per_seed[0]["metrics"].items()
                        if isinstance(v, float)]
        mean: Dict[str, float] = {}
        std: Dict[str, float] = {}
        for name in scalar_names:
            m, s = _mean_std([ps["metrics"][name] for ps in per_seed])
            mean[name] = m
            std[name] = s
        rows.append({"params": params, "per_seed": per_seed,
                     "mean": mean, "std": std})

    report = {
        "schema": REPORT_SCHEMA,
        "kind": args.kind,
        "score": score,
        "decoder": args.decoder,
        "backend": descriptor,
        "dataset": args.dataset,
        "seeds": seeds,
        "rows": rows,
    }
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n",
                           encoding="utf-8")
    artifacts.append(str(report_path))

    manifest = RunManifest(command="bench", config=_cfg_as_dict(base_cfg),
                           backend=descriptor, dataset=args.dataset,
                           output_dir=str(out_dir), artifacts=artifacts)
    manifest.write(out_dir / "manifest.json")

    table_rows = []
    for row in rows:
        entry: Dict[str, object] = dict(row["params"])
        for name, value in row["mean"].items():
            entry[name] = value
            if len(seeds) > 1:
                entry[f"{name}±"] = row["std"][name]
        table_rows.append(entry)
    columns = list(table_rows[0].keys()) if table_rows else []
    print(render_table(table_rows, columns))
    return 0


# ---------------------------------------------------------------- analyze

def _histogram(values: Sequence[float], bins: int = 20) -> List[dict]:
    counts = [0] * bins
    for v in values:
        idx = bins - 1 if v >= 1.0 else int(v * bins)
        counts[min(max(idx, 0), bins - 1)] += 1
    total = max(1, len(values))
    return [
        {"lo": i / bins, "hi": (i + 1) / bins, "count": c, "density": c / total}
        for i, c in enumerate(counts)
    ]


def _bar_svg(title: str, bars: Sequence[Tuple[str, float]],
             width: int = 640, height: int = 240) -> str:
    pad = 30
    if not bars:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"/>'
    peak = max((v for _, v in bars), default=1.0) or 1.0
    bar_w = (width - 2 * pad) / len(bars)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{pad}" y="16" font-size="12">{title}</text>',
    ]
    for i, (label, value) in enumerate(bars):
        h = 0.0 if peak == 0 else (value / peak) * (height - 2 * pad)
        x = pad + i * bar_w
        y = height - pad - h
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.9:.1f}" '
            f'height="{h:.1f}" fill="#4878a8"/>'
        )
        if len(bars) <= 24:
            parts.append(
                f'<text x="{x + bar_w * 0.45:.1f}" y="{height - pad + 12}" '
                f'font-size="8" text-anchor="middle">{label}</text>'
            )
    parts.append("</svg>")
    return "".join(parts)


def _load_pairs(path: str) -> List[Tuple[float, float]]:
    pairs: List[Tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or len(row) < 2:
                continue
            try:
                pairs.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header or stray text line
    if not pairs:
        raise SchemaError(f"{path}: no numeric (similarity, score) pairs found")
    return pairs


def cmd_analyze(args) -> int:
    traces = []
    for path in args.traces:
        traces.extend(read_traces(path))
    if not traces:
        raise SchemaError("no traces found in the given files")
    pairs = _load_pairs(args.pairs) if args.pairs else None
    stats = trace_divergence_stats(
        traces, lambda trace, step: step.branch, pairs=pairs, bins=args.bins
    )
    by_class: Dict[str, List[float]] = {}
    for trace in traces:
        for step in trace.steps:
            by_class.setdefault(step.branch, []).append(step.d_t)

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "analysis.json").write_text(
            json.dumps(stats, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        with open(out_dir / "density.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "lo", "hi", "count", "density"])
            for name in sorted(by_class):
                for bucket in _histogram(by_class[name]):
                    writer.writerow([name, bucket["lo"], bucket["hi"],
                                     bucket["count"], bucket["density"]])
        first = sorted(by_class)[0] if by_class else ""
        density_bars = [
            (f'{b["lo"]:.2f}', b["density"]) for b in _histogram(by_class.get(first, []))
        ]
        (out_dir / "density.svg").write_text(
            _bar_svg(f"divergence density ({first})", density_bars), encoding="utf-8"
        )
        if pairs is not None:
            with open(out_dir / "binned.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["lo", "hi", "n", "mean"])
                for b in stats["binned"]:
                    writer.writerow([b["lo"], b["hi"], b["n"], b["mean"]])
            binned_bars = [
                (f'{b["lo"]:.2f}', b["mean"] or 0.0) for b in stats["binned"]
            ]
            (out_dir / "binned.svg").write_text(
                _bar_svg("score vs similarity (binned means)", binned_bars),
                encoding="utf-8",
            )
    print(json.dumps(stats, indent=2, ensure_ascii=False))
    return 0


# ---------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict) or doc.get("schema") != REPORT_SCHEMA:
            raise SchemaError(f"{path}: expected schema {REPORT_SCHEMA!r}")
        reports.append((Path(path).stem if args.names is None
                        else args.names.split(",")[len(reports)], doc))
    metric_names: List[str] = []
    for _, doc in reports:
        for row in doc.get("rows", []):
            for name in row.get("mean", {}):
                if name not in metric_names:
                    metric_names.append(name)
    table = []
    for metric in metric_names:
        entry: Dict[str, object] = {"metric": metric}
        for name, doc in reports:
            rows = doc.get("rows", [])
            entry[name] = rows[0]["mean"].get(metric) if rows else None
        table.append(entry)
    print(render_table(table, ["metric"] + [n for n, _ in reports]))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degf",
        description="Divergence-gated decoding: run decodes, benchmarks, and "
                    "trace analyses over synthetic or HTTP model backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode one instance and write its trace")
    p.add_argument("--backend", default=_default_backend())
    p.add_argument("--decoder", required=True,
                   choices=("regular", "degf", "vcd", "m3id", "ritual"))
    p.add_argument("--image", default="img-0")
    p.add_argument("--prompt", default="Please describe this image in detail.")
    p.add_argument("--kind", choices=("yes_no", "open_caption", "binary_choice"),
                   default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    _add_hyperparam_flags(p, sweepable=False)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="run a benchmark dataset, score, and report")
    p.add_argument("--backend", default=_default_backend())
    p.add_argument("--decoder", required=True,
                   choices=("regular", "degf", "vcd", "m3id", "ritual"))
    p.add_argument("--kind", required=True,
                   choices=("yes_no", "open_caption", "binary_choice"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--score", choices=("pope", "mme", "chair"), default=None)
    p.add_argument("--truth", default=None,
                   help="per-image ground-truth objects JSON (chair)")
    p.add_argument("--synonyms", default=None, help="override synonym TSV")
    p.add_argument("--seeds", default=None, help="comma list; mean±std per metric")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", default="out")
    _add_hyperparam_flags(p, sweepable=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="summarize divergence traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--pairs", default=None,
                   help="CSV of similarity,score pairs for binned means + rho")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="side-by-side metric reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--names", default=None, help="comma list of column names")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        if getattr(args, "seed", None) is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        return args.func(args)
    except (ConfigError, ValidationError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (BackendUnavailableError, GeneratorUnavailableError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except DegfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
