"""Training pairs for the entailment discriminators.

Positives pair a source text (t1) with a natural-language rendering of one
annotated element (t2). Negatives are made by converting a share of the
positives with one of three strategies:

remove
    drop every t1 sentence whose similarity to t2 exceeds a threshold
revise
    rewrite t2 so a key fact (time, place, quantity, person) changes
replace
    swap t1 for the most similar pool text that shares no event anchor
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Protocol

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data_model import Argument, CausalRelation, TemporalRelation, dumps_record, iter_jsonl
from .embeddings import EmbeddingProvider, text_similarities
from .errors import (
    DegenerateRemoval,
    EmptyRemoval,
    IdenticalRevision,
    MalformedRecord,
    NliBuildError,
    NoEligibleReplacement,
    RephraserFailure,
    TooManySkips,
)
from .recall_metrics import ElementKind, KeyElement, render_element
from .text import split_sentences

logger = logging.getLogger(__name__)

Strategy = Literal["positive", "remove", "revise", "replace"]
NEGATIVE_STRATEGIES = ("remove", "revise", "replace")
SPLIT_NAMES = ("train", "dev", "test")
MAX_REVISE_ATTEMPTS = 3

# (train, dev, test) pair counts of the reference discriminator datasets
REFERENCE_SIZES: dict[str, tuple[int, int, int]] = {
    "event": (13265, 2433, 4481),
    "argument": (15000, 3000, 3000),
    "causal": (10082, 3505, 4098),
    "temporal": (9678, 1461, 1318),
}


class NliPair(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t1: str = Field(min_length=1)
    t2: str = Field(min_length=1)
    label: Literal[0, 1]
    kind: ElementKind
    strategy: Strategy
    source_id: str

    @model_validator(mode="after")
    def _coherent(self):
        if (self.label == 1) != (self.strategy == "positive"):
            raise ValueError(f"label {self.label} does not match strategy {self.strategy}")
        if not self.t1.strip() or not self.t2.strip():
            raise ValueError("t1 and t2 must be non-empty")
        return self


class SourceRecord(BaseModel):
    """One structured annotation with the text it was annotated on.

    ``event`` holds free-form structured fields (trigger, time, place, ...).
    ``anchors`` are the strings identifying the underlying event for the
    replace strategy; when omitted they default to the event trigger and time.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    source_id: str
    kind: ElementKind
    text: str = Field(min_length=1)
    event: dict[str, str] | None = None
    argument: Argument | None = None
    causal: CausalRelation | None = None
    temporal: TemporalRelation | None = None
    anchors: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _payload(self):
        if getattr(self, self.kind) is None:
            raise ValueError(f"{self.kind} record needs a '{self.kind}' payload")
        return self

    def anchor_set(self) -> set[str]:
        if self.anchors:
            return {a for a in self.anchors if a}
        if self.event:
            return {self.event[k] for k in ("trigger", "time") if self.event.get(k)}
        return set()


class Rephraser(Protocol):
    def to_sentence(self, record: SourceRecord) -> str: ...

    def revise(self, sentence: str) -> str: ...


_EVENT_FIELD_ORDER = ("time", "location", "place", "subject", "person", "organization", "trigger", "object")


class TemplateRephraser:
    """Deterministic rephraser.

    ``to_sentence`` concatenates structured event fields in a fixed order and
    renders relations with the same conjunction templates used at
    evaluation time. ``revise`` bumps the first number, else drops the last
    clause, else appends an unsupported detail.
    """

    def to_sentence(self, record: SourceRecord) -> str:
        if record.kind == "event":
            fields = record.event or {}
            ordered = [fields[k] for k in _EVENT_FIELD_ORDER if fields.get(k)]
            ordered += [v for k, v in fields.items() if k not in _EVENT_FIELD_ORDER and v]
            return "".join(ordered)
        payload = getattr(record, record.kind)
        return render_element(KeyElement(record.kind, payload))

    def revise(self, sentence: str) -> str:
        m = re.search(r"\d+", sentence)
        if m:
            return sentence[:m.start()] + str(int(m.group()) + 1) + sentence[m.end():]
        clauses = [c for c in re.split(r"(?<=[，,])", sentence) if c]
        if len(clauses) > 1:
            return "".join(clauses[:-1]).rstrip("，,")
        return sentence + "，但相关说法尚未得到证实"


class LLMRephraser:
    """Rephrasing through a generation backend."""

    TO_SENTENCE = "请将以下结构化事件信息改写为一句通顺、连贯的中文句子，只输出句子。\n{fields}"
    REVISE = ("请修改下面句子中的关键事件信息，例如时间、地点、数量或人物，也可以扩充或删减关键事件周围的细节，"
              "使修改后的句子与原句含义不同。只输出修改后的句子。\n{sentence}")

    def __init__(self, backend, params=None):
        from .harness import GenerationParams

        self.backend = backend
        self.params = params or GenerationParams()

    def _ask(self, prompt: str) -> str:
        try:
            out = self.backend.generate(prompt, self.params).strip()
        except Exception as exc:
            raise RephraserFailure(str(exc)) from exc
        if not out:
            raise RephraserFailure("empty rephrasing")
        return out

    def to_sentence(self, record: SourceRecord) -> str:
        if record.kind == "event":
            fields = "\n".join(f"{k}: {v}" for k, v in (record.event or {}).items())
        else:
            fields = render_element(KeyElement(record.kind, getattr(record, record.kind)))
        return self._ask(self.TO_SENTENCE.format(fields=fields))

    def revise(self, sentence: str) -> str:
        return self._ask(self.REVISE.format(sentence=sentence))


class BuildPlan(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    negative_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    strategy_mix: dict[str, float] = Field(default_factory=lambda: {s: 1 / 3 for s in NEGATIVE_STRATEGIES})
    replace_pool_size: int = Field(100, ge=1)
    remove_threshold: float = 0.5
    splits: tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_skip_rate: float = Field(0.2, ge=0.0, le=1.0)
    split_cap: dict[str, int] | None = None
    declared_sizes: dict[str, int] | None = None

    @model_validator(mode="after")
    def _weights(self):
        unknown = set(self.strategy_mix) - set(NEGATIVE_STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if any(w < 0 for w in self.strategy_mix.values()):
            raise ValueError("strategy weights must be non-negative")
        if not math.isclose(sum(self.strategy_mix.values()), 1.0, abs_tol=1e-9):
            raise ValueError("strategy weights must sum to 1")
        if any(f < 0 for f in self.splits) or not math.isclose(sum(self.splits), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must be non-negative and sum to 1")
        for mapping in (self.split_cap, self.declared_sizes):
            if mapping and set(mapping) - set(SPLIT_NAMES):
                raise ValueError(f"split keys must be among {SPLIT_NAMES}")
        return self

    @classmethod
    def load(cls, path: str | Path | None) -> "BuildPlan":
        if path is None:
            return cls()
        return cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- strategies

def _coref_rewrite(text: str, argument: Argument, mention: str) -> str:
    """Keep the first occurrence of the argument and replace the rest."""
    first = text.find(argument.text)
    if first < 0:
        return text
    head = text[:first + len(argument.text)]
    return head + text[first + len(argument.text):].replace(argument.text, mention)


def make_positive(record: SourceRecord, rephraser: Rephraser | None = None) -> NliPair:
    if record.kind == "argument":
        arg = record.argument
        if arg.corefs:
            mention = arg.corefs[0]
            t1, t2 = _coref_rewrite(record.text, arg, mention), mention
        else:
            t1, t2 = record.text, arg.text
    else:
        if rephraser is None:
            raise RephraserFailure(f"{record.kind} positives need a rephraser")
        try:
            t2 = rephraser.to_sentence(record)
        except RephraserFailure:
            raise
        except Exception as exc:
            raise RephraserFailure(f"{record.source_id}: {exc}") from exc
        if not t2 or not t2.strip():
            raise RephraserFailure(f"{record.source_id}: empty rephrasing")
        t1 = record.text
    return NliPair(t1=t1, t2=t2, label=1, kind=record.kind, strategy="positive", source_id=record.source_id)


def _require_positive(pair: NliPair):
    if pair.label != 1:
        raise ValueError("negative strategies start from a positive pair")


def negative_remove(pair: NliPair, provider: EmbeddingProvider, threshold: float = 0.5) -> NliPair:
    _require_positive(pair)
    sentences = split_sentences(pair.t1)
    sims = text_similarities(provider, sentences, pair.t2)
    kept = [s for s, sim in zip(sentences, sims) if not sim > threshold]
    if len(kept) == len(sentences):
        raise DegenerateRemoval(f"{pair.source_id}: no sentence exceeds similarity {threshold}")
    if not kept:
        raise EmptyRemoval(f"{pair.source_id}: every sentence exceeds similarity {threshold}")
    return pair.model_copy(update={"t1": "".join(kept), "label": 0, "strategy": "remove"})


def negative_revise(pair: NliPair, rephraser: Rephraser, attempts: int = MAX_REVISE_ATTEMPTS) -> NliPair:
    _require_positive(pair)
    for _ in range(attempts):
        try:
            revised = rephraser.revise(pair.t2)
        except RephraserFailure:
            raise
        except Exception as exc:
            raise RephraserFailure(f"{pair.source_id}: {exc}") from exc
        if revised and revised.strip() and revised != pair.t2:
            return pair.model_copy(update={"t2": revised, "label": 0, "strategy": "revise"})
    raise IdenticalRevision(f"{pair.source_id}: revision unchanged after {attempts} attempts")


def shares_anchor(candidate: SourceRecord, source: SourceRecord) -> bool:
    """Whether ``candidate`` may describe the same event as ``source``: a
    common anchor string, or a source anchor occurring in the candidate text."""
    anchors = source.anchor_set()
    if anchors & candidate.anchor_set():
        return True
    return any(a in candidate.text for a in anchors)


def negative_replace(pair: NliPair, pool: Sequence[SourceRecord], provider: EmbeddingProvider,
                     source: SourceRecord | None = None,
                     overlap: Callable[[SourceRecord, SourceRecord], bool] = shares_anchor) -> NliPair:
    _require_positive(pair)
    eligible = [c for c in pool
                if c.source_id != pair.source_id and c.text != pair.t1
                and not (source is not None and overlap(c, source))]
    if not eligible:
        raise NoEligibleReplacement(f"{pair.source_id}: all {len(pool)} pool candidates overlap")
    sims = text_similarities(provider, [c.text for c in eligible], pair.t2)
    best = max(range(len(eligible)), key=lambda i: (sims[i], -i))
    return pair.model_copy(update={"t1": eligible[best].text, "label": 0, "strategy": "replace"})


# ------------------------------------------------------------------- dataset

@dataclass
class NliDataset:
    kind: str
    splits: dict[str, list[NliPair]]
    skipped: Counter = field(default_factory=Counter)
    attempted: int = 0

    def histogram(self) -> dict[str, dict[str, int]]:
        return {split: dict(sorted(Counter(p.strategy for p in pairs).items()))
                for split, pairs in self.splits.items()}

    def manifest(self, seed: int, plan: BuildPlan) -> dict:
        return {
            "kind": self.kind,
            "seed": seed,
            "counts": {s: len(p) for s, p in self.splits.items()},
            "strategies": self.histogram(),
            "attempted": self.attempted,
            "skipped": dict(sorted(self.skipped.items())),
            "declared_sizes": plan.declared_sizes,
            "plan": plan.model_dump(mode="json"),
        }


def _split_sources(source_ids: Sequence[str], fractions, seed: int) -> dict[str, str]:
    unique = sorted(set(source_ids))
    random.Random(f"{seed}:splits").shuffle(unique)
    n = len(unique)
    n_train = round(n * fractions[0])
    n_dev = round(n * fractions[1])
    assign = {}
    for i, sid in enumerate(unique):
        assign[sid] = "train" if i < n_train else "dev" if i < n_train + n_dev else "test"
    return assign


def build_dataset(sources: Sequence[SourceRecord], plan: BuildPlan, rephraser: Rephraser | None,
                  provider: EmbeddingProvider, seed: int = 0, kind: str | None = None) -> NliDataset:
    """Positives for every record, then a ``negative_fraction`` share of them
    converted to negatives. Splits are drawn per source_id so no source text
    crosses splits.

    All randomness derives from ``seed`` and the record index, so the output
    does not depend on processing order.
    """
    if not sources:
        raise ValueError("no source records")
    kind = kind or sources[0].kind
    records = [r for r in sources if r.kind == kind]
    skipped: Counter = Counter()

    positives: list[tuple[int, NliPair]] = []
    for i, rec in enumerate(records):
        try:
            positives.append((i, make_positive(rec, rephraser)))
        except NliBuildError as exc:
            skipped[type(exc).__name__] += 1
            logger.debug("skip %s: %s", rec.source_id, exc)

    n_convert = round(plan.negative_fraction * len(positives))
    chosen = set(random.Random(f"{seed}:negatives").sample(range(len(positives)), n_convert))
    weights = [plan.strategy_mix.get(s, 0.0) for s in NEGATIVE_STRATEGIES]

    pairs: list[NliPair] = []
    for j, (i, pos) in enumerate(positives):
        if j not in chosen:
            pairs.append(pos)
            continue
        rng = random.Random(f"{seed}:record:{i}")
        strategy = rng.choices(NEGATIVE_STRATEGIES, weights=weights)[0]
        try:
            if strategy == "remove":
                pairs.append(negative_remove(pos, provider, plan.remove_threshold))
            elif strategy == "revise":
                if rephraser is None:
                    raise RephraserFailure("revise needs a rephraser")
                pairs.append(negative_revise(pos, rephraser))
            else:
                others = [r for r in records if r.source_id != records[i].source_id]
                pool = rng.sample(others, min(plan.replace_pool_size, len(others)))
                pairs.append(negative_replace(pos, pool, provider, source=records[i]))
        except NliBuildError as exc:
            skipped[type(exc).__name__] += 1
            logger.debug("skip %s (%s): %s", pos.source_id, strategy, exc)

    attempted = len(records)
    n_skipped = sum(skipped.values())
    if attempted and n_skipped / attempted > plan.max_skip_rate:
        raise TooManySkips(f"{n_skipped} of {attempted} pairs skipped ({dict(skipped)})")

    assign = _split_sources([p.source_id for p in pairs], plan.splits, seed)
    splits: dict[str, list[NliPair]] = {s: [] for s in SPLIT_NAMES}
    for pair in pairs:
        splits[assign[pair.source_id]].append(pair)
    if plan.split_cap:
        for split, cap in plan.split_cap.items():
            splits[split] = splits[split][:cap]
    return NliDataset(kind, splits, skipped, attempted)


def write_dataset(dataset: NliDataset, out_dir: str | Path, seed: int, plan: BuildPlan) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split, pairs in dataset.splits.items():
        with (out_dir / f"{dataset.kind}.{split}.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for pair in pairs:
                fh.write(dumps_record(pair) + "\n")
    manifest = out_dir / f"{dataset.kind}.manifest.json"
    manifest.write_text(json.dumps(dataset.manifest(seed, plan), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    return manifest


class SizeManifest(BaseModel):
    """Per-kind size declaration, e.g. the sizes of a published release."""

    model_config = ConfigDict(extra="allow")

    kind: ElementKind
    counts: dict[str, int] = Field(default_factory=dict)
    declared_sizes: dict[str, int] | None = None

    @model_validator(mode="after")
    def _keys(self):
        for mapping in (self.counts, self.declared_sizes or {}):
            if set(mapping) - set(SPLIT_NAMES) or any(v < 0 for v in mapping.values()):
                raise ValueError(f"split sizes must be non-negative and keyed by {SPLIT_NAMES}")
        return self


def load_size_manifest(path: str | Path) -> SizeManifest:
    return SizeManifest.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


def load_sources(path: str | Path) -> list[SourceRecord]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(SourceRecord.model_validate(obj))
        except ValidationError as exc:
            raise MalformedRecord(lineno, exc.errors()[0]["msg"], str(path)) from None
    return out
