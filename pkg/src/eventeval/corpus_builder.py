"""Automatic corpus construction: cleaning, relevance filtering, document
count clamping, temporal annotation and instance assembly.

Raw input is a drop folder of JSONL files, one encyclopedia entry per line::

    {"title": ..., "card": {"time": ..., "location": ...},
     "description": <reference summary>,
     "references": [{"url": ..., "text": ...}],
     "retrieved": [<Document-shaped records>]}

Fetching those records (encyclopedia scraping, news search) happens upstream.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import random
import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Protocol
from urllib.parse import urlparse

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data_model import Document, Instance, TemporalRelation, iter_jsonl, parse_date, write_corpus
from .dates import parse_loose_date
from .embeddings import EmbeddingProvider, text_similarities
from .errors import AnnotatorFailure, ConfigError, MalformedRecord, MissingSimilarityScores
from .text import collapse_whitespace, normalize_for_dedup, normalize_for_match, split_sentences

logger = logging.getLogger(__name__)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    similarity_threshold: float = Field(0.5, ge=0.0, le=1.0)
    min_docs: int = Field(5, ge=1)
    max_docs: int = 20
    retrieval_window_days: int = Field(31, ge=0)
    retrieval_top_k: int = Field(20, ge=0)
    dev_fraction: float = Field(500 / 5100, ge=0.0, le=1.0)
    test_fraction: float = Field(585 / 5100, ge=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _bounds(self):
        if self.max_docs < self.min_docs:
            raise ValueError(f"max_docs ({self.max_docs}) must be >= min_docs ({self.min_docs})")
        if self.dev_fraction + self.test_fraction > 1.0:
            raise ValueError("dev_fraction + test_fraction exceeds 1")
        return self


def read_flat_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` file (or a JSON object) into a dict."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string("[config]\n" + text, source=str(path))
    return dict(parser["config"])


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return PipelineConfig.model_validate(read_flat_config(path))
    except ValidationError as exc:
        raise ConfigError([f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()]) from None
    except (OSError, configparser.Error, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from None


# ------------------------------------------------------------------ cleaning

# markup remnants and navigation boilerplate seen in scraped Chinese news pages
_CLEAN_PATTERNS = [
    re.compile(r"<!--.*?-->", re.S),
    re.compile(r"<(script|style)\b.*?</\1\s*>", re.S | re.I),
    re.compile(r"</?[A-Za-z][^<>]*?/?>"),
    re.compile(r"&(nbsp|amp|lt|gt|quot|#\d+);"),
    re.compile(r"(责任编辑|编辑|校对)[:：]\s*\S{1,12}\s*$", re.M),
    re.compile(r"返回\S{0,4}[，,]?\s*查看更多"),
    re.compile(r"(点击|扫一扫|长按)\S{0,10}(关注|阅读原文|进入|下载)\S{0,10}"),
    re.compile(r"(分享到|打开APP|版权所有|未经授权禁止转载)[:：]?\S{0,20}", re.I),
    re.compile(r"【(纠错|打印|关闭窗口)】"),
]


def clean_text(body: str) -> str:
    for pattern in _CLEAN_PATTERNS:
        body = pattern.sub(" ", body)
    return collapse_whitespace(body)


def clean_documents(raw: Sequence[Document]) -> list[Document]:
    """Strip markup/boilerplate, drop empty bodies and exact duplicates.

    Duplicates are detected on width-folded, whitespace-collapsed bodies; the
    copy with the earliest publish_time survives (undated copies lose to dated
    ones) and takes the position of the group's first occurrence.
    """
    cleaned = []
    for doc in raw:
        body = clean_text(doc.body)
        if body:
            cleaned.append(doc.model_copy(update={"body": body}))

    groups: dict[str, list[int]] = {}
    order: list[str] = []
    for i, doc in enumerate(cleaned):
        key = normalize_for_dedup(doc.body)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(i)

    def when(i: int):
        t = cleaned[i].publish_time
        return (t is None, t or date.max, i)

    return [cleaned[min(groups[key], key=when)] for key in order]


# ----------------------------------------------------------------- relevance

def score_documents(docs: Sequence[Document], reference: str, provider: EmbeddingProvider) -> dict[str, float]:
    """doc_id -> similarity of the whole body to the reference summary."""
    sims = text_similarities(provider, [d.body for d in docs], reference)
    return {d.doc_id: s for d, s in zip(docs, sims)}


def filter_by_relevance(docs: Sequence[Document], reference: str, provider: EmbeddingProvider,
                        config: PipelineConfig, scores: Mapping[str, float] | None = None) -> list[Document]:
    """Keep documents scoring at least ``config.similarity_threshold``."""
    if scores is None:
        scores = score_documents(docs, reference, provider)
    return [d for d in docs if scores[d.doc_id] >= config.similarity_threshold]


@dataclass(frozen=True)
class Rejection:
    reason: str
    doc_count: int


def instance_id_for(title: str) -> str:
    return "evt-" + hashlib.sha1(title.encode("utf-8")).hexdigest()[:12]


def assemble_instance(title: str, docs: Sequence[Document], reference: str, config: PipelineConfig,
                      scores: Mapping[str, float] | None = None, *, instance_id: str | None = None,
                      event_date: date | None = None, card: Mapping[str, str] | None = None) -> Instance | Rejection:
    docs = list(docs)
    if len(docs) < config.min_docs:
        return Rejection("too_few_documents", len(docs))
    if len(docs) > config.max_docs:
        if scores is None or any(d.doc_id not in scores for d in docs):
            raise MissingSimilarityScores(f"{title!r}: {len(docs)} documents need truncation but scores are missing")
        ranked = sorted(range(len(docs)), key=lambda i: (-scores[docs[i].doc_id], i))
        keep = set(ranked[:config.max_docs])
        docs = [d for i, d in enumerate(docs) if i in keep]
    return Instance(
        instance_id=instance_id or instance_id_for(title),
        event_title=title,
        documents=tuple(docs),
        reference=reference,
        reference_kind="auto",
        event_date=event_date,
        card=dict(card or {}),
    )


# -------------------------------------------------------- temporal relations

class RelationAnnotator(Protocol):
    def annotate(self, summary: str) -> list[TemporalRelation]: ...


def ground_relations(relations: Sequence[TemporalRelation], reference: str) -> tuple[list[TemporalRelation], int]:
    """Deduplicate, drop ungrounded/self pairs and transitive shortcuts.

    Returns the kept relations and the number dropped (duplicates excluded).
    """
    ref = normalize_for_match(reference)
    kept: list[TemporalRelation] = []
    seen = set()
    dropped = 0
    for rel in relations:
        key = (rel.earlier, rel.later)
        if key in seen:
            continue
        seen.add(key)
        if rel.earlier == rel.later or any(
            not normalize_for_match(s) or normalize_for_match(s) not in ref for s in key
        ):
            dropped += 1
            continue
        kept.append(rel)
    pairs = {(r.earlier, r.later) for r in kept}
    mids = {r.later for r in kept}
    direct = [r for r in kept if not any((r.earlier, b) in pairs and (b, r.later) in pairs for b in mids)]
    dropped += len(kept) - len(direct)
    return direct, dropped


def annotate_temporal(instance: Instance, annotator: RelationAnnotator) -> Instance:
    try:
        raw = annotator.annotate(instance.reference)
    except AnnotatorFailure:
        raise
    except Exception as exc:
        raise AnnotatorFailure(f"{instance.instance_id}: {exc}") from exc
    relations, dropped = ground_relations(raw, instance.reference)
    if dropped:
        logger.info("%s: dropped %d ungrounded temporal relation(s)", instance.instance_id, dropped)
    return instance.model_copy(update={"temporal": tuple(relations)})


_SEQUENCE_MARKERS = ("随后", "之后", "此后", "其后", "接着", "紧接着", "然后", "次日", "翌日", "第二天")


class RuleTemporalAnnotator:
    """Marks adjacent sentence pairs as ordered when the later one opens with a
    sequencing conjunction or both carry dates in increasing order."""

    def annotate(self, summary: str) -> list[TemporalRelation]:
        from .dates import extract_dates

        sentences = split_sentences(summary)
        out = []
        prev_date = last_seen = None
        for i, sent in enumerate(sentences):
            dates = extract_dates(sent, anchor=last_seen)
            if i > 0:
                prev = sentences[i - 1]
                ordered = sent.lstrip("，,、 ").startswith(_SEQUENCE_MARKERS)
                if not ordered and dates and prev_date is not None and dates[0] > prev_date:
                    ordered = True
                if ordered and prev != sent:
                    out.append(TemporalRelation(earlier=prev, later=sent))
            prev_date = dates[-1] if dates else None
            last_seen = prev_date or last_seen
        return out


_LLM_TEMPORAL_PROMPT = (
    "下面是一段事件摘要。请找出其中具有明确时间先后关系且在时间上直接相邻的子事件句对，"
    "只标注有明确时间指示词或连接词的关系。每行输出一对，格式为：句子A ||| before ||| 句子B，"
    "或 句子A ||| after ||| 句子B。句子必须原样摘自摘要。若没有则输出“无”。\n\n摘要：{summary}"
)


class LLMTemporalAnnotator:
    """Temporal annotation through a text-generation backend.

    The backend is asked for ``A ||| before|after ||| B`` lines; anything else
    in the reply is ignored.
    """

    def __init__(self, backend, params=None, prompt: str = _LLM_TEMPORAL_PROMPT):
        from .harness import GenerationParams

        self.backend = backend
        self.params = params or GenerationParams()
        self.prompt = prompt

    def annotate(self, summary: str) -> list[TemporalRelation]:
        try:
            reply = self.backend.generate(self.prompt.format(summary=summary), self.params)
        except Exception as exc:
            raise AnnotatorFailure(str(exc)) from exc
        out = []
        for line in reply.splitlines():
            parts = [p.strip() for p in line.split("|||")]
            if len(parts) != 3 or parts[1] not in ("before", "after") or not parts[0] or not parts[2]:
                continue
            try:
                out.append(TemporalRelation.from_pair(parts[0], parts[2], parts[1]))
            except ValidationError:
                continue
        return out


class NullAnnotator:
    def annotate(self, summary: str) -> list[TemporalRelation]:
        return []


# --------------------------------------------------------------- raw entries

class RawReference(BaseModel):
    url: str = ""
    text: str = ""


class RawEntry(BaseModel):
    model_config = ConfigDict(extra="ignore")

    title: str
    card: dict[str, str] = Field(default_factory=dict)
    description: str = ""
    references: list[RawReference] = Field(default_factory=list)
    retrieved: list[dict[str, Any]] = Field(default_factory=list)


_TIME_KEYS = ("time", "时间", "发生时间", "日期")
_PLACE_KEYS = ("location", "地点", "发生地点")


def _card_value(card: Mapping[str, str], keys) -> str:
    for key in keys:
        if str(card.get(key, "")).strip():
            return str(card[key]).strip()
    return ""


def is_event_entry(entry: RawEntry) -> bool:
    """An entry describes an event when its card carries time and location."""
    return bool(_card_value(entry.card, _TIME_KEYS) and _card_value(entry.card, _PLACE_KEYS))


def entry_event_date(entry: RawEntry) -> date | None:
    value = _card_value(entry.card, _TIME_KEYS)
    return parse_date(value) or parse_loose_date(value)


def entry_documents(entry: RawEntry, config: PipelineConfig) -> list[Document]:
    """Reference-linked articles followed by the retrieved ones.

    Retrieved articles outside ``retrieval_window_days`` of the event date
    are dropped before the first ``retrieval_top_k`` are taken.
    """
    docs: list[Document] = []
    for i, ref in enumerate(entry.references):
        if ref.text.strip():
            docs.append(Document(doc_id=f"ref-{i}", source=urlparse(ref.url).netloc, body=ref.text))
    event_date = entry_event_date(entry)
    retrieved = []
    for i, rec in enumerate(entry.retrieved):
        rec = {"doc_id": f"ret-{i}", **rec}
        doc = Document.model_validate(rec)
        if event_date and doc.publish_time and abs((doc.publish_time - event_date).days) > config.retrieval_window_days:
            continue
        retrieved.append(doc)
    docs.extend(retrieved[:config.retrieval_top_k])

    seen: set[str] = set()
    unique = []
    for doc in docs:
        doc_id = doc.doc_id
        n = 1
        while doc_id in seen:
            n += 1
            doc_id = f"{doc.doc_id}#{n}"
        seen.add(doc_id)
        unique.append(doc if doc_id == doc.doc_id else doc.model_copy(update={"doc_id": doc_id}))
    return unique


def build_instance(entry: RawEntry, provider: EmbeddingProvider, config: PipelineConfig,
                   annotator: RelationAnnotator | None = None) -> Instance | Rejection:
    reference = collapse_whitespace(entry.description)
    if not reference:
        return Rejection("empty_reference", 0)
    docs = clean_documents(entry_documents(entry, config))
    scores = score_documents(docs, reference, provider)
    docs = filter_by_relevance(docs, reference, provider, config, scores)
    result = assemble_instance(entry.title, docs, reference, config, scores,
                               event_date=entry_event_date(entry), card=entry.card)
    if isinstance(result, Instance) and annotator is not None:
        result = annotate_temporal(result, annotator)
    return result


@dataclass
class BuildSummary:
    entries: int = 0
    non_event: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    split_sizes: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"entries": self.entries, "non_event": self.non_event,
                "rejected": dict(sorted(self.rejected.items())), "split_sizes": self.split_sizes}


def read_raw_entries(raw_dir: str | Path):
    raw_dir = Path(raw_dir)
    files = sorted(raw_dir.glob("*.jsonl")) if raw_dir.is_dir() else [raw_dir]
    for file in files:
        for lineno, obj in iter_jsonl(file):
            try:
                yield RawEntry.model_validate(obj)
            except ValidationError as exc:
                raise MalformedRecord(lineno, exc.errors()[0]["msg"], str(file)) from None


def split_instances(instances: Sequence[Instance], config: PipelineConfig) -> dict[str, list[Instance]]:
    order = list(range(len(instances)))
    random.Random(config.seed).shuffle(order)
    n = len(order)
    n_test = round(n * config.test_fraction)
    n_dev = round(n * config.dev_fraction)
    test = set(order[:n_test])
    dev = set(order[n_test:n_test + n_dev])
    splits: dict[str, list[Instance]] = {"train": [], "dev": [], "test": []}
    for i, inst in enumerate(instances):
        splits["test" if i in test else "dev" if i in dev else "train"].append(inst)
    return splits


def build_corpus(raw_dir: str | Path, out_dir: str | Path, config: PipelineConfig,
                 provider: EmbeddingProvider, annotator: RelationAnnotator | None = None,
                 event_filter: Callable[[RawEntry], bool] = is_event_entry) -> BuildSummary:
    summary = BuildSummary()
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    for entry in read_raw_entries(raw_dir):
        summary.entries += 1
        if not event_filter(entry):
            summary.non_event += 1
            continue
        result = build_instance(entry, provider, config, annotator)
        if isinstance(result, Rejection):
            summary.rejected[result.reason] = summary.rejected.get(result.reason, 0) + 1
            continue
        if result.instance_id in seen_ids:
            summary.rejected["duplicate_title"] = summary.rejected.get("duplicate_title", 0) + 1
            continue
        seen_ids.add(result.instance_id)
        instances.append(result)
    splits = split_instances(instances, config)
    write_corpus(out_dir, splits)
    summary.split_sizes = {k: len(v) for k, v in splits.items()}
    Path(out_dir, "build_summary.json").write_text(
        json.dumps(summary.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return summary
