"""Sentence-embedding providers used for relevance filtering and the
similarity-based negative strategies."""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import ProviderFailure
from .text import normalize_for_match


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...

    def similarity(self, a, b) -> float: ...


class CosineMixin:
    def similarity(self, a, b) -> float:
        return cosine(a, b)


def text_similarities(provider: EmbeddingProvider, texts: Sequence[str], anchor: str) -> list[float]:
    """Similarity of every text in ``texts`` to ``anchor`` with one embed call.

    Backend exceptions surface as :class:`ProviderFailure`.
    """
    if not texts:
        return []
    try:
        vectors = provider.embed([anchor, *texts])
    except ProviderFailure:
        raise
    except Exception as exc:
        raise ProviderFailure(f"{getattr(provider, 'name', provider)!s}: {exc}") from exc
    if len(vectors) != len(texts) + 1:
        raise ProviderFailure(f"provider returned {len(vectors)} vectors for {len(texts) + 1} texts")
    ref = vectors[0]
    return [provider.similarity(v, ref) for v in vectors[1:]]


class HashingEmbedder(CosineMixin):
    """Bag of hashed character n-grams. Deterministic and dependency free;
    the offline default when no sentence-transformers model is available."""

    def __init__(self, dim: int = 2048, ngram: int = 2):
        self.dim = dim
        self.ngram = ngram
        self.name = f"hashing-{ngram}gram-{dim}"

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            vec = np.zeros(self.dim)
            chars = normalize_for_match(text)
            for n in range(1, self.ngram + 1):
                for i in range(len(chars) - n + 1):
                    vec[self._bucket(chars[i:i + n])] += 1.0
            out.append(vec)
        return out


class SentenceTransformerEmbedder(CosineMixin):
    """Wraps a sentence-transformers checkpoint (loaded lazily)."""

    def __init__(self, model_name: str = "paraphrase-multilingual-mpnet-base-v2", batch_size: int = 32):
        self.name = model_name
        self.batch_size = batch_size
        self._model = None

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:  # pragma: no cover - optional extra
                raise ProviderFailure("sentence-transformers is not installed") from exc
            try:
                self._model = SentenceTransformer(self.name)
            except Exception as exc:  # pragma: no cover - needs model download
                raise ProviderFailure(f"cannot load {self.name}: {exc}") from exc
        return self._model

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:  # pragma: no cover - needs weights
        model = self._load()
        arr = model.encode(list(texts), batch_size=self.batch_size, convert_to_numpy=True)
        return [np.asarray(row) for row in arr]
