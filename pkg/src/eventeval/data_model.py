"""Corpus schema and JSONL serialization.

An instance bundles the input documents of one dynamic event, its reference
summary, the temporal relations annotated on that reference and, for the
human-annotated test split, the global structured annotation.

Structural typing is enforced by pydantic on construction. Corpus admission
rules (document count, grounded causal endpoints, ...) are checked by
:func:`validate_instance`, which reports every violation at once.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from datetime import date, datetime
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import (
    DuplicatePrediction,
    MalformedRecord,
    UnknownSplit,
    ValidationFailure,
    Violation,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
MIN_DOCS = 5
MAX_DOCS = 20

ArgumentRole = Literal["time", "location", "person", "organization"]
CausalKind = Literal["cause", "precondition"]
ReferenceKind = Literal["auto", "human"]


def parse_date(value: Any) -> date | None:
    """ISO-8601 calendar date, or None when the value does not parse."""
    if value is None or isinstance(value, date) and not isinstance(value, datetime):
        return value
    if isinstance(value, datetime):
        return value.date()
    if not isinstance(value, str):
        return None
    text = value.strip()
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text).date()
    except ValueError:
        return None


def _split_date_field(data: Any, field: str) -> Any:
    # unparseable dates move to a sidecar "<field>_raw" and the field is left empty
    if not isinstance(data, Mapping) or data.get(field) is None:
        return data
    parsed = parse_date(data[field])
    if parsed is not None:
        return {**data, field: parsed}
    return {**data, field: None, f"{field}_raw": str(data[field])}


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Document(_Frozen):
    doc_id: str
    source: str = ""
    title: str = ""
    publish_time: date | None = None
    publish_time_raw: str | None = None
    body: str

    @model_validator(mode="before")
    @classmethod
    def _dates(cls, data):
        return _split_date_field(data, "publish_time")


class TemporalRelation(_Frozen):
    """Ordering between two directly adjacent sub-events.

    Stored canonically as ``earlier before later``. A record supplied as
    ``(x, y, "after")`` reads "x happens after y" and is swapped on ingest.
    """

    earlier: str
    later: str
    relation: Literal["before", "after"] = "before"

    @model_validator(mode="before")
    @classmethod
    def _canonical(cls, data):
        if isinstance(data, Mapping) and data.get("relation") == "after":
            data = {**data, "earlier": data.get("later"), "later": data.get("earlier"), "relation": "before"}
        return data

    @classmethod
    def from_pair(cls, first: str, second: str, relation: str) -> "TemporalRelation":
        return cls(earlier=first, later=second, relation=relation)


class Argument(_Frozen):
    text: str
    role: ArgumentRole
    corefs: tuple[str, ...] = ()


class CausalRelation(_Frozen):
    cause_sentence: str
    effect_sentence: str
    kind: CausalKind = "cause"


class GlobalAnnotation(_Frozen):
    sub_events: tuple[str, ...] = ()
    arguments: tuple[Argument, ...] = ()
    causal: tuple[CausalRelation, ...] = ()


class Instance(_Frozen):
    instance_id: str
    event_title: str
    documents: tuple[Document, ...]
    reference: str
    reference_kind: ReferenceKind = "auto"
    temporal: tuple[TemporalRelation, ...] = ()
    global_annotation: GlobalAnnotation | None = None
    event_date: date | None = None
    event_date_raw: str | None = None
    # basic-information card of the source entry; only its time field is used
    card: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _dates(cls, data):
        return _split_date_field(data, "event_date")


class GeneratedSummary(_Frozen):
    instance_id: str
    system_id: str
    text: str
    shots: int = Field(default=0, ge=0)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.instance_id, self.system_id, self.shots)


# ---------------------------------------------------------------- validation

def instance_violations(inst: Instance, min_docs: int = MIN_DOCS, max_docs: int = MAX_DOCS) -> list[Violation]:
    found: list[Violation] = []
    n = len(inst.documents)
    if not min_docs <= n <= max_docs:
        found.append(Violation("DocumentCountOutOfRange", f"{n} documents, expected {min_docs}..{max_docs}"))
    if not inst.reference.strip():
        found.append(Violation("EmptyReference", "reference summary is empty"))

    seen_ids: set[str] = set()
    for doc in inst.documents:
        if doc.doc_id in seen_ids:
            found.append(Violation("DuplicateDocId", f"doc_id {doc.doc_id!r} repeated"))
        seen_ids.add(doc.doc_id)
        if not doc.body.strip():
            found.append(Violation("EmptyBody", f"document {doc.doc_id!r} has an empty body"))

    pairs = set()
    for rel in inst.temporal:
        if rel.earlier == rel.later:
            found.append(Violation("SelfTemporalRelation", f"{rel.earlier!r} ordered against itself"))
        pairs.add((rel.earlier, rel.later))
    for a, c in sorted(pairs):
        if any((a, b) in pairs and (b, c) in pairs for b in {p[1] for p in pairs}):
            found.append(Violation("TransitiveTemporalPair", f"({a!r}, {c!r}) is implied by adjacent pairs"))

    g = inst.global_annotation
    if g is not None:
        if inst.reference_kind != "human":
            found.append(Violation("AnnotationWithoutHumanReference", "global annotation requires reference_kind=human"))
        if len(set(g.sub_events)) != len(g.sub_events):
            found.append(Violation("DuplicateSubEvent", "sub_events contains exact duplicates"))
        subs = set(g.sub_events)
        for rel in g.causal:
            for end in (rel.cause_sentence, rel.effect_sentence):
                if end not in subs:
                    found.append(Violation("DanglingCausalEndpoint", f"{end!r} is not an annotated sub-event"))
            if rel.cause_sentence == rel.effect_sentence:
                found.append(Violation("SelfCausalRelation", f"{rel.cause_sentence!r} causes itself"))
        for arg in g.arguments:
            if not arg.text.strip():
                found.append(Violation("EmptyArgument", "argument text is empty"))
            if arg.text in arg.corefs:
                found.append(Violation("CorefDuplicatesText", f"argument {arg.text!r} lists itself as a coref"))
    return found


def validate_instance(candidate: Instance | Mapping[str, Any], min_docs: int = MIN_DOCS,
                      max_docs: int = MAX_DOCS) -> Instance:
    """Return the instance if every invariant holds, else raise
    :class:`ValidationFailure` listing all violations."""
    if isinstance(candidate, Instance):
        inst = candidate
    else:
        try:
            inst = Instance.model_validate(candidate)
        except ValidationError as exc:
            raise ValidationFailure([
                Violation("MalformedField", f"{'.'.join(map(str, e['loc'])) or '<record>'}: {e['msg']}")
                for e in exc.errors()
            ]) from None
    violations = instance_violations(inst, min_docs, max_docs)
    if violations:
        raise ValidationFailure(violations)
    return inst


# ------------------------------------------------------------- serialization

def dumps_record(model: BaseModel) -> str:
    """Canonical one-line JSON: model fields, sorted keys, UTF-8 text."""
    return json.dumps(model.model_dump(mode="json"), ensure_ascii=False, sort_keys=True)


def write_jsonl(path: str | Path, records: Iterable[BaseModel]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def iter_jsonl(path: str | Path):
    """Yield (line_number, parsed_object) for every non-blank line."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})", str(path)) from None
            if not isinstance(obj, dict):
                raise MalformedRecord(lineno, "record is not a JSON object", str(path))
            yield lineno, obj


def corpus_file(path: str | Path, split: str) -> Path:
    if split not in SPLITS:
        raise UnknownSplit(f"unknown split {split!r}; expected one of {', '.join(SPLITS)}")
    path = Path(path)
    return path / f"{split}.jsonl" if path.is_dir() else path


def load_corpus(path: str | Path, split: str = "test", min_docs: int = MIN_DOCS,
                max_docs: int = MAX_DOCS) -> list[Instance]:
    """Load one split. ``path`` is a corpus directory holding
    ``train.jsonl``/``dev.jsonl``/``test.jsonl`` or a single JSONL file."""
    file = corpus_file(path, split)
    instances = []
    for lineno, obj in iter_jsonl(file):
        try:
            instances.append(validate_instance(obj, min_docs, max_docs))
        except ValidationFailure as exc:
            raise MalformedRecord(lineno, str(exc), str(file)) from None
    return instances


def write_corpus(directory: str | Path, splits: Mapping[str, Iterable[Instance]]) -> None:
    directory = Path(directory)
    for split, instances in splits.items():
        corpus_file(directory, split)
        write_jsonl(directory / f"{split}.jsonl", instances)


def load_predictions(path: str | Path) -> list[GeneratedSummary]:
    preds = []
    keys = set()
    for lineno, obj in iter_jsonl(path):
        try:
            pred = GeneratedSummary.model_validate(obj)
        except ValidationError as exc:
            raise MalformedRecord(lineno, exc.errors()[0]["msg"], str(path)) from None
        if pred.key in keys:
            raise DuplicatePrediction(f"{path}:{lineno}: duplicate prediction key {pred.key}")
        keys.add(pred.key)
        preds.append(pred)
    return preds
