"""Key-element recall: Event, Argument, Causal and Temporal Recall.

For a kind with annotated elements E and a generated summary s::

    recall = sum(judge(s, render(e)) for e in E) / len(E)

where ``judge`` is an entailment discriminator returning 0 or 1. An empty
element set has no recall (``None``), which is distinct from 0.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Protocol, Union

import httpx

from .data_model import Argument, CausalRelation, GeneratedSummary, Instance, TemporalRelation
from .errors import DiscriminatorFailure, EventEvalError, MissingAnnotation
from .text import normalize_for_match

ElementKind = Literal["event", "argument", "causal", "temporal"]
KINDS: tuple[ElementKind, ...] = ("event", "argument", "causal", "temporal")
KIND_COLUMNS = {"event": "er", "argument": "ar", "causal": "cr", "temporal": "tr"}

Payload = Union[str, Argument, CausalRelation, TemporalRelation]
_PAYLOAD_TYPES = {"event": str, "argument": Argument, "causal": CausalRelation, "temporal": TemporalRelation}


@dataclass
class KeyElement:
    kind: ElementKind
    payload: Payload
    rendered: str | None = None

    def __post_init__(self):
        expected = _PAYLOAD_TYPES[self.kind]
        if not isinstance(self.payload, expected):
            raise TypeError(f"{self.kind} element needs a {expected.__name__} payload, got {type(self.payload).__name__}")

    @property
    def corefs(self) -> tuple[str, ...]:
        return self.payload.corefs if isinstance(self.payload, Argument) else ()


@dataclass
class KeyElementSet:
    kind: ElementKind
    elements: list[KeyElement] = field(default_factory=list)

    def __post_init__(self):
        for el in self.elements:
            if el.kind != self.kind:
                raise TypeError(f"{el.kind} element in a {self.kind} set")

    def __len__(self) -> int:
        return len(self.elements)


def render_element(element: KeyElement) -> str:
    """Natural-language text of an element; also fills ``element.rendered``."""
    p = element.payload
    if element.kind == "event":
        text = p
    elif element.kind == "argument":
        text = p.text
    elif element.kind == "causal":
        if p.kind == "cause":
            text = f"因为{p.cause_sentence}，所以{p.effect_sentence}"
        else:
            text = f"{p.cause_sentence}，在此前提下{p.effect_sentence}"
    else:
        text = f"{p.earlier}。随后，{p.later}"
    element.rendered = text
    return text


class Discriminator(Protocol):
    """Binary entailment judge. ``summary`` plays t1 and ``element`` t2;
    ``corefs`` lists alternative mentions for argument elements."""

    name: str

    def judge(self, summary: str, element: str, corefs: Sequence[str] = ()) -> int: ...


class ContainmentOracle:
    """Entailed iff the normalized element (or any coref) is a substring of
    the normalized summary. No numeral or synonym folding."""

    name = "containment"

    def judge(self, summary: str, element: str, corefs: Sequence[str] = ()) -> int:
        s = normalize_for_match(summary)
        for mention in (element, *corefs):
            m = normalize_for_match(mention)
            if m and m in s:
                return 1
        return 0


def containment_oracle() -> ContainmentOracle:
    return ContainmentOracle()


class HttpDiscriminator:
    """Client for a remote entailment service.

    ``POST {base}/judge`` takes ``{"summary", "element"}`` and answers
    ``{"entailed": 0|1}``; ``POST {base}/judge/batch`` takes equal-length
    ``summary``/``element`` arrays and answers an ``entailed`` array.
    """

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 60.0,
                 name: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)
        self.name = name or f"http:{self.base_url}"

    @staticmethod
    def _bit(value) -> int:
        if value not in (0, 1):
            raise EventEvalError(f"discriminator returned non-binary verdict {value!r}")
        return int(value)

    def judge_batch(self, summaries: Sequence[str], elements: Sequence[str]) -> list[int]:
        if len(summaries) != len(elements):
            raise ValueError("summaries and elements must have equal length")
        resp = self.client.post(f"{self.base_url}/judge/batch",
                                json={"summary": list(summaries), "element": list(elements)})
        resp.raise_for_status()
        verdicts = resp.json()["entailed"]
        if len(verdicts) != len(elements):
            raise EventEvalError(f"batch reply has {len(verdicts)} verdicts for {len(elements)} elements")
        return [self._bit(v) for v in verdicts]

    def judge(self, summary: str, element: str, corefs: Sequence[str] = ()) -> int:
        if corefs:
            mentions = [element, *corefs]
            return int(any(self.judge_batch([summary] * len(mentions), mentions)))
        resp = self.client.post(f"{self.base_url}/judge", json={"summary": summary, "element": element})
        resp.raise_for_status()
        return self._bit(resp.json()["entailed"])


@dataclass
class RecallResult:
    kind: ElementKind
    entailed: int
    total: int
    recall: float | None
    per_element: list[tuple[KeyElement, int]] = field(default_factory=list)

    @property
    def present(self) -> bool:
        return self.recall is not None


def recall_for_kind(elements: KeyElementSet, summary: GeneratedSummary | str, discriminator: Discriminator,
                    jobs: int = 1) -> RecallResult:
    text = summary.text if isinstance(summary, GeneratedSummary) else summary
    if not text.strip():
        raise ValueError("summary text is empty")
    items = elements.elements
    if not items:
        return RecallResult(elements.kind, 0, 0, None, [])

    def one(el: KeyElement) -> int:
        rendered = el.rendered if el.rendered is not None else render_element(el)
        try:
            verdict = discriminator.judge(text, rendered, el.corefs)
        except Exception as exc:
            raise DiscriminatorFailure(el, exc) from exc
        if verdict not in (0, 1):
            raise DiscriminatorFailure(el, ValueError(f"non-binary verdict {verdict!r}"))
        return int(verdict)

    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(one, items))
    else:
        verdicts = [one(el) for el in items]
    entailed = sum(verdicts)
    return RecallResult(elements.kind, entailed, len(items), entailed / len(items), list(zip(items, verdicts)))


def key_elements(instance: Instance, kind: ElementKind) -> KeyElementSet:
    """Annotated elements of one kind; raises MissingAnnotation when the
    instance carries no annotation source for it."""
    if kind == "temporal":
        return KeyElementSet(kind, [KeyElement(kind, rel) for rel in instance.temporal])
    g = instance.global_annotation
    if g is None:
        raise MissingAnnotation(f"{instance.instance_id} has no global annotation for {kind} recall")
    payloads = {"event": g.sub_events, "argument": g.arguments, "causal": g.causal}[kind]
    return KeyElementSet(kind, [KeyElement(kind, p) for p in payloads])


def evaluate_summary(instance: Instance, summary: GeneratedSummary, discriminator: Discriminator,
                     jobs: int = 1) -> dict[str, RecallResult]:
    """Recall per kind. Kinds with no annotated elements are left out."""
    results: dict[str, RecallResult] = {}
    for kind in KINDS:
        try:
            elements = key_elements(instance, kind)
        except MissingAnnotation:
            continue
        result = recall_for_kind(elements, summary, discriminator, jobs)
        if result.present:
            results[kind] = result
    return results


def verdict_records(summary: GeneratedSummary, results: dict[str, RecallResult]) -> list[dict]:
    """Flat per-element verdicts, the input format of consistency analysis."""
    rows = []
    for kind in KINDS:
        res = results.get(kind)
        if res is None:
            continue
        for index, (el, verdict) in enumerate(res.per_element):
            rows.append({
                "instance_id": summary.instance_id,
                "system_id": summary.system_id,
                "shots": summary.shots,
                "kind": kind,
                "index": index,
                "element": el.rendered,
                "verdict": verdict,
            })
    return rows
