"""Report aggregation, bucketed breakdowns and metric/human agreement."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data_model import Instance, iter_jsonl
from .dates import extract_dates
from .errors import DuplicateScoreRecord, EmptyInput, LengthMismatch, MalformedRecord

METRIC_COLUMNS = ("r1", "r2", "rl", "semantic_f1", "er", "ar", "cr", "tr")
COLUMN_TITLES = {"r1": "R-1", "r2": "R-2", "rl": "R-L", "semantic_f1": "BS",
                 "er": "ER", "ar": "AR", "cr": "CR", "tr": "TR"}
RECALL_COLUMNS = ("er", "ar", "cr", "tr")

_unit = Field(None, ge=0.0, le=1.0)


class ScoreRecord(BaseModel):
    """Per-instance scores of one prediction; metric values are fractions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    instance_id: str
    system_id: str
    shots: int = Field(0, ge=0)
    r1: float = Field(ge=0.0, le=1.0)
    r2: float = Field(ge=0.0, le=1.0)
    rl: float = Field(ge=0.0, le=1.0)
    semantic_f1: float = Field(ge=0.0, le=1.0)
    er: float | None = _unit
    ar: float | None = _unit
    cr: float | None = _unit
    tr: float | None = _unit

    @property
    def key(self):
        return (self.system_id, self.shots, self.instance_id)


@dataclass
class ReportRow:
    system_id: str
    shots: int
    n_instances: int
    r1: float | None = None
    r2: float | None = None
    rl: float | None = None
    semantic_f1: float | None = None
    er: float | None = None
    ar: float | None = None
    cr: float | None = None
    tr: float | None = None

    def values(self) -> dict[str, float | None]:
        return {c: getattr(self, c) for c in METRIC_COLUMNS}


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def aggregate_report(scores: Iterable[ScoreRecord]) -> list[ReportRow]:
    """Macro average per (system_id, shots), as percentages.

    A recall column averages only the instances where that kind is present.
    Rows come out sorted by system_id then shots.
    """
    groups: dict[tuple[str, int], list[ScoreRecord]] = defaultdict(list)
    seen = set()
    for rec in scores:
        if rec.key in seen:
            raise DuplicateScoreRecord(f"duplicate score record {rec.key}")
        seen.add(rec.key)
        groups[(rec.system_id, rec.shots)].append(rec)

    rows = []
    for (system_id, shots), recs in sorted(groups.items()):
        recs = sorted(recs, key=lambda r: r.instance_id)
        row = ReportRow(system_id, shots, len(recs))
        for col in METRIC_COLUMNS:
            mean = _mean([getattr(r, col) for r in recs if getattr(r, col) is not None])
            setattr(row, col, None if mean is None else 100.0 * mean)
        rows.append(row)
    return rows


def format_value(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_table(rows: Sequence[ReportRow]) -> str:
    header = ["Model", "Shots", "N", *(COLUMN_TITLES[c] for c in METRIC_COLUMNS)]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row.system_id, str(row.shots), str(row.n_instances)]
        cells += [format_value(v) for v in row.values().values()]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def load_scores(paths: Iterable[str | Path]) -> list[ScoreRecord]:
    out = []
    for path in paths:
        for lineno, obj in iter_jsonl(path):
            try:
                out.append(ScoreRecord.model_validate(obj))
            except ValidationError as exc:
                raise MalformedRecord(lineno, exc.errors()[0]["msg"], str(path)) from None
    return out


# ------------------------------------------------------------------- buckets

def time_span(instance: Instance) -> int | None:
    """Days between the earliest and latest date in the reference summary."""
    dates = extract_dates(instance.reference, anchor=instance.event_date)
    if not dates:
        return None
    return (max(dates) - min(dates)).days


DIMENSION_DEFINITIONS = {
    "doc_count": "number of input documents",
    "time_span": "days between the earliest and latest date mentioned in the reference summary",
}

TIME_SPAN_LABELS = ("within one day", "one day to one week", "one week to one month", "over one month")


class Bucketing(BaseModel):
    """Interval buckets over one instance attribute.

    ``edges`` e0 < e1 < ... < ek give buckets [e0, e1], (e1, e2], ...,
    (e(k-1), ek]. Values outside the edges, or with no value at all, land in
    an ``other`` bucket so the buckets always partition the corpus.
    """

    model_config = ConfigDict(frozen=True)

    dimension: Literal["doc_count", "time_span"]
    edges: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing with at least two entries")
        if self.labels is not None and len(self.labels) != len(self.edges) - 1:
            raise ValueError("need one label per bucket")
        return self

    @classmethod
    def default(cls, dimension: str) -> "Bucketing":
        if dimension == "doc_count":
            return cls(dimension="doc_count", edges=(5, 8, 12, 16, 20))
        if dimension == "time_span":
            return cls(dimension="time_span", edges=(0, 1, 7, 31, math.inf), labels=TIME_SPAN_LABELS)
        raise ValueError(f"unknown bucketing dimension {dimension!r}")

    def bucket_labels(self) -> list[str]:
        if self.labels is not None:
            return list(self.labels)

        def fmt(x):
            return "inf" if math.isinf(x) else f"{x:g}"

        out = []
        for i, (lo, hi) in enumerate(zip(self.edges, self.edges[1:])):
            out.append(f"{'[' if i == 0 else '('}{fmt(lo)},{fmt(hi)}]")
        return out

    def value_of(self, instance: Instance) -> float | None:
        if self.dimension == "doc_count":
            return len(instance.documents)
        return time_span(instance)

    def assign(self, value: float | None) -> str:
        labels = self.bucket_labels()
        if value is not None:
            for i, (lo, hi) in enumerate(zip(self.edges, self.edges[1:])):
                if (lo <= value if i == 0 else lo < value) and value <= hi:
                    return labels[i]
        return "other"


@dataclass
class Bucket:
    label: str
    size: int
    rows: list[ReportRow] = field(default_factory=list)


@dataclass
class BucketReport:
    dimension: str
    buckets: list[Bucket]

    def plot_data(self) -> dict:
        labels = [b.label for b in self.buckets]
        series: dict[str, dict[str, list]] = {}
        for i, bucket in enumerate(self.buckets):
            for row in bucket.rows:
                name = f"{row.system_id}|{row.shots}shot"
                entry = series.setdefault(name, {c: [None] * len(labels) for c in METRIC_COLUMNS})
                for col, val in row.values().items():
                    entry[col][i] = None if val is None else round(val, 4)
        return {"dimension": self.dimension, "definition": DIMENSION_DEFINITIONS[self.dimension], "labels": labels,
                "sizes": [b.size for b in self.buckets], "series": dict(sorted(series.items()))}


def bucket_metrics(scores: Iterable[ScoreRecord], instances: Sequence[Instance], bucketing: Bucketing) -> BucketReport:
    """Macro-averaged rows per bucket; sizes count corpus instances."""
    member = {inst.instance_id: bucketing.assign(bucketing.value_of(inst)) for inst in instances}
    labels = bucketing.bucket_labels()
    sizes = {label: 0 for label in labels}
    for label in member.values():
        sizes[label] = sizes.get(label, 0) + 1
    grouped: dict[str, list[ScoreRecord]] = defaultdict(list)
    for rec in scores:
        if rec.instance_id in member:
            grouped[member[rec.instance_id]].append(rec)
    order = labels + (["other"] if sizes.get("other") else [])
    return BucketReport(bucketing.dimension,
                        [Bucket(label, sizes[label], aggregate_report(grouped.get(label, []))) for label in order])


# --------------------------------------------------------------- consistency

class ConsistencyInput(BaseModel):
    predicted: list[Literal[0, 1]]
    human: list[Literal[0, 1]]


def consistency(predicted: Sequence[int] | ConsistencyInput, human: Sequence[int] | None = None) -> float:
    """Percentage of aligned elements where both verdicts agree."""
    if isinstance(predicted, ConsistencyInput):
        predicted, human = predicted.predicted, predicted.human
    if human is None:
        raise TypeError("human verdicts are required")
    if len(predicted) != len(human):
        raise LengthMismatch(f"{len(predicted)} predicted vs {len(human)} human verdicts")
    if not predicted:
        raise EmptyInput("no verdicts to compare")
    for v in (*predicted, *human):
        if v not in (0, 1):
            raise ValueError(f"verdicts must be 0 or 1, got {v!r}")
    agree = sum(1 for p, h in zip(predicted, human) if p == h)
    return 100.0 * agree / len(predicted)


def align_verdicts(predicted: Iterable[Mapping], human: Iterable[Mapping]) -> dict[str, ConsistencyInput]:
    """Pair verdict records by (instance, system, shots, kind, index), per kind."""
    def key(r):
        return (r["instance_id"], r["system_id"], r.get("shots", 0), r["kind"], r["index"])

    human_by_key = {key(r): r["verdict"] for r in human}
    out: dict[str, tuple[list, list]] = {}
    for rec in predicted:
        k = key(rec)
        if k not in human_by_key:
            continue
        p, h = out.setdefault(rec["kind"], ([], []))
        p.append(rec["verdict"])
        h.append(human_by_key[k])
    return {kind: ConsistencyInput(predicted=p, human=h) for kind, (p, h) in out.items()}


# ------------------------------------------------------------- corpus stats

def corpus_stats(instances: Sequence[Instance]) -> dict[str, float]:
    n = len(instances)
    if n == 0:
        return {"instances": 0, "mean_docs": 0.0, "mean_input_chars": 0.0, "mean_reference_chars": 0.0}
    return {
        "instances": n,
        "mean_docs": sum(len(i.documents) for i in instances) / n,
        "mean_input_chars": sum(sum(len(d.body) for d in i.documents) for i in instances) / n,
        "mean_reference_chars": sum(len(i.reference) for i in instances) / n,
    }


def write_plot_data(report: BucketReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.plot_data(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
