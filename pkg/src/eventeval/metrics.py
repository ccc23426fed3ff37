"""Lexical and semantic overlap between a generated and a reference summary.

Texts are width-folded and stripped of whitespace, then scored per
character (``unit="word"`` switches to whitespace tokens for pre-segmented
input).
"""

from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import EncoderFailure, InvalidOrder
from .text import tokenize


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "ScoreTriple":
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(precision, recall, f1)


ZERO = ScoreTriple(0.0, 0.0, 0.0)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int, unit: str = "char") -> ScoreTriple:
    """Clipped n-gram overlap."""
    if n < 1:
        raise InvalidOrder(f"ROUGE order must be >= 1, got {n}")
    cand = ngrams(tokenize(candidate, unit), n)
    ref = ngrams(tokenize(reference, unit), n)
    if not cand or not ref:
        return ZERO
    overlap = sum((cand & ref).values())
    return ScoreTriple.from_pr(overlap / sum(cand.values()), overlap / sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, unit: str = "char") -> ScoreTriple:
    cand = tokenize(candidate, unit)
    ref = tokenize(reference, unit)
    if not cand or not ref:
        return ZERO
    length = lcs_length(cand, ref)
    return ScoreTriple.from_pr(length / len(cand), length / len(ref))


class TokenEncoder(Protocol):
    name: str

    def encode(self, text: str) -> list[tuple[str, np.ndarray]]: ...


class CharHashEncoder:
    """Per-character random unit vectors seeded by the code point.

    Distinct characters are near-orthogonal, so the score approximates
    soft unigram matching. Deterministic and model free.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.name = f"char-hash-{dim}"
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, ch: str) -> np.ndarray:
        vec = self._cache.get(ch)
        if vec is None:
            rng = np.random.default_rng(zlib.crc32(ch.encode("utf-8")))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[ch] = vec
        return vec

    def encode(self, text: str) -> list[tuple[str, np.ndarray]]:
        return [(ch, self._vector(ch)) for ch in tokenize(text, "char")]


class TransformersEncoder:
    """Contextual token vectors from a Hugging Face encoder (lazily loaded)."""

    def __init__(self, model_name: str = "bert-base-chinese", layer: int = -1, max_length: int = 512):
        self.name = f"{model_name}@{layer}"
        self.model_name = model_name
        self.layer = layer
        self.max_length = max_length
        self._tok = None
        self._model = None

    def encode(self, text: str) -> list[tuple[str, np.ndarray]]:  # pragma: no cover - needs weights
        if self._model is None:
            try:
                from transformers import AutoModel, AutoTokenizer
                self._tok = AutoTokenizer.from_pretrained(self.model_name)
                self._model = AutoModel.from_pretrained(self.model_name, output_hidden_states=True)
                self._model.eval()
            except Exception as exc:
                raise EncoderFailure(f"cannot load {self.model_name}: {exc}") from exc
        import torch

        enc = self._tok(text, return_tensors="pt", truncation=True, max_length=self.max_length)
        with torch.no_grad():
            hidden = self._model(**enc).hidden_states[self.layer][0]
        ids = enc["input_ids"][0].tolist()
        tokens = self._tok.convert_ids_to_tokens(ids)
        special = set(self._tok.all_special_ids)
        return [(t, hidden[i].numpy()) for i, (t, tid) in enumerate(zip(tokens, ids)) if tid not in special]


def _unit_rows(vectors: list[np.ndarray]) -> np.ndarray:
    mat = np.vstack(vectors).astype(float)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def semantic_f1(candidate: str, reference: str, encoder: TokenEncoder) -> ScoreTriple:
    """Greedy cosine matching of token vectors, without idf weighting.

    Each side's score is the mean over its tokens of the best cosine against
    the other side; negative cosines count as 0 so the triple stays in [0, 1].
    """
    try:
        cand = encoder.encode(candidate)
        ref = encoder.encode(reference)
    except EncoderFailure:
        raise
    except Exception as exc:
        raise EncoderFailure(f"{getattr(encoder, 'name', encoder)!s}: {exc}") from exc
    if not cand or not ref:
        return ZERO
    sim = _unit_rows([v for _, v in cand]) @ _unit_rows([v for _, v in ref]).T
    sim = np.clip(sim, 0.0, 1.0)
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    return ScoreTriple.from_pr(precision, recall)
