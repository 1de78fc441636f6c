"""Benchmark scoring and trace statistics.

Three scorers cover the supported benchmark families:

- yes/no probing: confusion-matrix accuracy/precision/recall/F1 with
  "yes" as the positive class;
- open-ended captioning: hallucinated-object rates per mention and per
  sentence, object recall, and mean response length;
- paired-question sets: 100 * accuracy + 100 * accuracy+, where
  accuracy+ counts images whose both questions are answered correctly.

Every 0/0 rate is defined as 0 and the affected metric name is listed in
the result's ``flags`` so degenerate aggregates are visible in reports.

``trace_divergence_stats`` summarizes per-token divergences by class
(e.g. hallucinatory vs clean tokens) and, when (similarity, score) pairs
are supplied, computes fixed-width-bin means and the Pearson correlation.

Scoring is pure aggregation over immutable records; output ordering is
deterministic (records are processed sorted by instance id).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from degf.errors import (
    EmptyInputError,
    InsufficientDataError,
    MalformedSubsetError,
    MissingTruthError,
    SchemaError,
)
from degf.pipeline import DecodeTrace, StepTrace

BENCH_SCHEMA = "degf-bench/1"
REPORT_SCHEMA = "degf-report/1"

BENCHMARK_KINDS = ("yes_no", "open_caption", "binary_choice")


@dataclass(frozen=True)
class BenchmarkRecord:
    instance_id: str
    benchmark_kind: str
    image_id: str
    question: str
    label: str
    response: str = ""
    similarity: Optional[float] = None
    trace_ref: Optional[str] = None
    judge_accuracy: Optional[float] = None
    judge_detailedness: Optional[float] = None

    def __post_init__(self):
        if self.benchmark_kind not in BENCHMARK_KINDS:
            raise SchemaError(
                f"benchmark_kind must be one of {BENCHMARK_KINDS}, "
                f"got {self.benchmark_kind!r}"
            )
        if self.benchmark_kind == "yes_no" and self.label not in ("yes", "no"):
            raise SchemaError(
                f"yes_no record {self.instance_id!r} needs label yes|no, "
                f"got {self.label!r}"
            )


def record_to_dict(rec: BenchmarkRecord) -> dict:
    doc = {
        "schema": BENCH_SCHEMA,
        "instance_id": rec.instance_id,
        "benchmark_kind": rec.benchmark_kind,
        "image_id": rec.image_id,
        "question": rec.question,
        "label": rec.label,
        "response": rec.response,
    }
    for key in ("similarity", "trace_ref", "judge_accuracy", "judge_detailedness"):
        value = getattr(rec, key)
        if value is not None:
            doc[key] = value
    return doc


def record_from_dict(doc: dict, where: str = "<memory>") -> BenchmarkRecord:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: record line must be a JSON object")
    schema = doc.get("schema")
    if schema != BENCH_SCHEMA:
        raise SchemaError(f"{where}: expected schema {BENCH_SCHEMA!r}, got {schema!r}")
    try:
        return BenchmarkRecord(
            instance_id=str(doc["instance_id"]),
            benchmark_kind=str(doc["benchmark_kind"]),
            image_id=str(doc["image_id"]),
            question=str(doc["question"]),
            label=str(doc["label"]),
            response=str(doc.get("response", "")),
            similarity=(
                float(doc["similarity"]) if doc.get("similarity") is not None else None
            ),
            trace_ref=doc.get("trace_ref"),
            judge_accuracy=(
                float(doc["judge_accuracy"])
                if doc.get("judge_accuracy") is not None
                else None
            ),
            judge_detailedness=(
                float(doc["judge_detailedness"])
                if doc.get("judge_detailedness") is not None
                else None
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed record: {exc!r}") from exc


def read_records(path: Union[str, Path]) -> List[BenchmarkRecord]:
    import json

    path = Path(path)
    out: List[BenchmarkRecord] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read record file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        out.append(record_from_dict(doc, where=f"{path}:{lineno}"))
    return out


def write_records(path: Union[str, Path], records: Iterable[BenchmarkRecord]) -> None:
    from degf.traceio import canonical_json

    lines = [canonical_json(record_to_dict(r)) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


_WORD = re.compile(r"[A-Za-z]+")


def parse_yes_no(response: str) -> Tuple[str, bool]:
    """First alphabetic word, case-insensitive. Anything that is not a
    leading yes/no counts as "no" and is reported as unparsed."""
    match = _WORD.search(response)
    if match:
        word = match.group(0).lower()
        if word in ("yes", "no"):
            return word, True
    return "no", False


def _rate(num: int, den: int, name: str, flags: List[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def pope_scores(records: Sequence[BenchmarkRecord]) -> dict:
    """Confusion-matrix scores with "yes" as the positive class."""
    if not records:
        raise EmptyInputError("no records to score")
    tp = fp = fn = tn = unparsed = 0
    for rec in sorted(records, key=lambda r: r.instance_id):
        predicted, ok = parse_yes_no(rec.response)
        if not ok:
            unparsed += 1
        actual = rec.label.strip().lower()
        if predicted == "yes" and actual == "yes":
            tp += 1
        elif predicted == "yes" and actual == "no":
            fp += 1
        elif predicted == "no" and actual == "yes":
            fn += 1
        else:
            tn += 1
    flags: List[str] = []
    accuracy = _rate(tp + tn, tp + fp + fn + tn, "accuracy", flags)
    precision = _rate(tp, tp + fp, "precision", flags)
    recall = _rate(tp, tp + fn, "recall", flags)
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        flags.append("f1")
        f1 = 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "counts": {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "unparsed": unparsed},
        "flags": flags,
    }


def parse_synonyms(text: str, where: str = "<memory>") -> Dict[str, str]:
    """TSV of surface_form<TAB>canonical_class. Canonical classes also map
    to themselves."""
    table: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SchemaError(
                f"{where}:{lineno}: expected surface<TAB>canonical, got {line!r}"
            )
        surface, canonical = parts[0].strip().lower(), parts[1].strip().lower()
        table[surface] = canonical
        table.setdefault(canonical, canonical)
    return table


def load_synonyms(path: Union[str, Path]) -> Dict[str, str]:
    return parse_synonyms(Path(path).read_text(encoding="utf-8"), where=str(path))


def default_synonyms() -> Dict[str, str]:
    from importlib import resources

    text = (
        resources.files("degf")
        .joinpath("data/object_synonyms.tsv")
        .read_text(encoding="utf-8")
    )
    return parse_synonyms(text, where="degf/data/object_synonyms.tsv")


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> List[str]:
    parts = _SENTENCE_SPLIT.split(text.strip())
    return [p.strip().rstrip(".!?").strip() for p in parts if p.strip().strip(".!?").strip()]


def extract_mentions(sentence: str, synonyms: Mapping[str, str]) -> Set[str]:
    """Canonical object classes mentioned in one sentence, by longest-match
    n-gram lookup against the synonym table (no learned extraction)."""
    words = [w.lower() for w in _WORD.findall(sentence)]
    if not words:
        return set()
    max_len = max((s.count(" ") + 1 for s in synonyms), default=1)
    found: Set[str] = set()
    i = 0
    while i < len(words):
        matched = False
        for n in range(min(max_len, len(words) - i), 0, -1):
            candidate = " ".join(words[i : i + n])
            if candidate in synonyms:
                found.add(synonyms[candidate])
                i += n
                matched = True
                break
        if not matched:
            i += 1
    return found


def chair_scores(
    records: Sequence[BenchmarkRecord],
    ground_truth_objects: Mapping[str, Iterable[str]],
    synonym_table: Optional[Mapping[str, str]] = None,
) -> dict:
    """Hallucination rates over open-ended captions.

    chair_i = hallucinated object mentions / all object mentions
    chair_s = sentences containing a hallucinated object / all sentences
    recall  = mentioned-and-true objects / true objects
    avg_length = mean whitespace-token count of responses

    Mentions are counted as distinct canonical classes per caption.
    """
    if not records:
        raise EmptyInputError("no records to score")
    synonyms = synonym_table if synonym_table is not None else default_synonyms()
    missing = sorted(
        {r.image_id for r in records if r.image_id not in ground_truth_objects}
    )
    if missing:
        raise MissingTruthError(missing)

    total_mentions = 0
    hallucinated_mentions = 0
    total_sentences = 0
    hallucinated_sentences = 0
    truth_total = 0
    truth_hit = 0
    lengths: List[int] = []
    for rec in sorted(records, key=lambda r: r.instance_id):
        truth = {t.strip().lower() for t in ground_truth_objects[rec.image_id]}
        sentences = split_sentences(rec.response)
        caption_mentions: Set[str] = set()
        for sentence in sentences:
            mentions = extract_mentions(sentence, synonyms)
            caption_mentions |= mentions
            total_sentences += 1
            if mentions - truth:
                hallucinated_sentences += 1
        total_mentions += len(caption_mentions)
        hallucinated_mentions += len(caption_mentions - truth)
        truth_total += len(truth)
        truth_hit += len(caption_mentions & truth)
        lengths.append(len(rec.response.split()))

    flags: List[str] = []
    chair_i = _rate(hallucinated_mentions, total_mentions, "chair_i", flags)
    chair_s = _rate(hallucinated_sentences, total_sentences, "chair_s", flags)
    recall = _rate(truth_hit, truth_total, "recall", flags)
    avg_length = sum(lengths) / len(lengths)
    return {
        "chair_i": chair_i,
        "chair_s": chair_s,
        "recall": recall,
        "avg_length": avg_length,
        "counts": {
            "mentions": total_mentions,
            "hallucinated_mentions": hallucinated_mentions,
            "sentences": total_sentences,
            "hallucinated_sentences": hallucinated_sentences,
            "truth_objects": truth_total,
            "truth_mentioned": truth_hit,
        },
        "flags": flags,
    }


def mme_score(records: Sequence[BenchmarkRecord]) -> dict:
    """score = 100 * accuracy + 100 * accuracy_plus, where accuracy_plus
    requires both of an image's two questions to be answered correctly."""
    if not records:
        raise EmptyInputError("no records to score")
    by_image: Dict[str, List[BenchmarkRecord]] = {}
    for rec in sorted(records, key=lambda r: r.instance_id):
        by_image.setdefault(rec.image_id, []).append(rec)
    bad = sorted(img for img, recs in by_image.items() if len(recs) != 2)
    if bad:
        raise MalformedSubsetError(
            f"images must have exactly 2 questions each; offending: {bad}"
        )
    correct = 0
    both_correct = 0
    for img in sorted(by_image):
        pair_ok = True
        for rec in by_image[img]:
            predicted, _ = parse_yes_no(rec.response)
            if predicted == rec.label.strip().lower():
                correct += 1
            else:
                pair_ok = False
        if pair_ok:
            both_correct += 1
    n_questions = 2 * len(by_image)
    accuracy = correct / n_questions
    accuracy_plus = both_correct / len(by_image)
    return {
        "score": 100.0 * accuracy + 100.0 * accuracy_plus,
        "accuracy": accuracy,
        "accuracy_plus": accuracy_plus,
        "counts": {
            "questions": n_questions,
            "correct": correct,
            "images": len(by_image),
            "images_both_correct": both_correct,
        },
        "flags": [],
    }


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation coefficient over paired samples."""
    if len(xs) != len(ys):
        raise InsufficientDataError("paired sequences must have equal length")
    n = len(xs)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points, got {n}")
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    sxy = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mean_x) ** 2 for x in xs)
    syy = math.fsum((y - mean_y) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise InsufficientDataError("zero variance in one coordinate")
    rho = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


def _quantile(sorted_values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile over a pre-sorted sample."""
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac


def _summarize(values: Sequence[float]) -> dict:
    ordered = sorted(values)
    n = len(ordered)
    return {
        "n": n,
        "mean": math.fsum(ordered) / n,
        "median": _quantile(ordered, 0.5),
        "p10": _quantile(ordered, 0.10),
        "p90": _quantile(ordered, 0.90),
        "min": ordered[0],
        "max": ordered[-1],
    }


def binned_means(
    pairs: Sequence[Tuple[float, float]], bins: int = 10
) -> List[dict]:
    """Fixed-width bins over the first coordinate; mean of the second per
    bin. Empty bins are reported with n=0 and mean None."""
    if not pairs:
        raise InsufficientDataError("no pairs to bin")
    xs = [p[0] for p in pairs]
    lo, hi = min(xs), max(xs)
    width = (hi - lo) / bins if hi > lo else 1.0
    buckets: List[List[float]] = [[] for _ in range(bins)]
    for x, y in pairs:
        idx = bins - 1 if x >= hi else int((x - lo) / width)
        idx = min(max(idx, 0), bins - 1)
        buckets[idx].append(y)
    out = []
    for i, bucket in enumerate(buckets):
        out.append(
            {
                "lo": lo + i * width,
                "hi": lo + (i + 1) * width,
                "n": len(bucket),
                "mean": (math.fsum(bucket) / len(bucket)) if bucket else None,
            }
        )
    return out


def trace_divergence_stats(
    traces: Sequence[DecodeTrace],
    label_fn: Callable[[DecodeTrace, StepTrace], str],
    pairs: Optional[Sequence[Tuple[float, float]]] = None,
    bins: int = 10,
) -> dict:
    """Per-class divergence summaries, plus binned means and Pearson rho
    when (similarity, score) pairs are supplied."""
    by_class: Dict[str, List[float]] = {}
    for trace in traces:
        for step in trace.steps:
            by_class.setdefault(label_fn(trace, step), []).append(step.d_t)
    classes = {name: _summarize(vals) for name, vals in sorted(by_class.items())}
    result: dict = {"classes": classes}
    if pairs is not None:
        result["binned"] = binned_means(pairs, bins=bins)
        result["pearson_rho"] = pearson([p[0] for p in pairs], [p[1] for p in pairs])
    return result


def render_table(rows: Sequence[Mapping[str, object]], columns: Sequence[str]) -> str:
    """Plain aligned text table: header row, dashes, one line per row."""
    def fmt(value: object) -> str:
        if isinstance(value, bool) or value is None:
            return str(value)
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    cells = [[fmt(row.get(col)) for col in columns] for row in rows]
    widths = [
        max(len(col), *(len(r[i]) for r in cells)) if cells else len(col)
        for i, col in enumerate(columns)
    ]
    lines = [
        "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns)),
        "  ".join("-" * widths[i] for i in range(len(columns))),
    ]
    for r in cells:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(columns))))
    return "\n".join(lines)
