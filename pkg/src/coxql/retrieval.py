"""Similarity search over training questions.

Powers the nearest-neighbor baseline and the similarity-based choice of
few-shot demonstrations. The default embedder hashes character trigrams into
a fixed 4096-dimensional term-frequency vector, so everything runs offline
and deterministically; a sentence-embedding service can be plugged in via
:class:`RemoteEmbedder`.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import httpx
import numpy as np

from .dataset import Dataset, Example
from .qlcore import BackendFailure, CoxqlError

DIMENSION = 4096
DEFAULT_SHOTS = 20
_CLEAN_RE = re.compile(r"[^a-z0-9 ]+")


class EmptyCorpus(CoxqlError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    norm: float
    empty: bool = False

    @classmethod
    def of(cls, values, empty: bool = False) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        arr.setflags(write=False)
        return cls(arr, float(np.linalg.norm(arr)), empty)

    def __eq__(self, other):
        return isinstance(other, EmbeddingVector) and np.array_equal(self.values, other.values)

    def __len__(self):
        return len(self.values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.norm == 0 or b.norm == 0:
        return 0.0
    return float(np.dot(a.values, b.values) / (a.norm * b.norm))


def _trigrams(text: str) -> list[str]:
    clean = " ".join(_CLEAN_RE.sub(" ", text.lower()).split())
    if not clean:
        return []
    padded = f" {clean} "
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


def lexical_embed(text: str, dimension: int = DIMENSION) -> EmbeddingVector:
    """Hashed character-trigram term frequencies (crc32 bucket per trigram)."""
    vec = np.zeros(dimension, dtype=np.float64)
    grams = _trigrams(text)
    for g in grams:
        vec[zlib.crc32(g.encode("utf-8")) % dimension] += 1.0
    return EmbeddingVector.of(vec, empty=not grams)


class LexicalEmbedder:
    deterministic = True
    dimension = DIMENSION
    max_concurrency = 0

    def embed(self, text: str) -> EmbeddingVector:
        return lexical_embed(text, self.dimension)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([lexical_embed(t, self.dimension).values for t in texts]) if texts \
            else np.zeros((0, self.dimension))


class RemoteEmbedder:
    """POSTs ``{"input": [texts]}`` and expects ``{"embeddings": [[...], ...]}``."""

    deterministic = True
    max_concurrency = 1

    def __init__(self, url: str, dimension: int, timeout: float = 30.0, client: Optional[httpx.Client] = None):
        self.url = url
        self.dimension = dimension
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = self._client.post(self.url, json={"input": list(texts)}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise BackendFailure(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendFailure(f"embedding endpoint returned HTTP {resp.status_code}")
        try:
            rows = resp.json()["embeddings"]
            arr = np.asarray(rows, dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendFailure("malformed embedding response") from exc
        if arr.shape != (len(texts), self.dimension):
            raise BackendFailure(f"expected {len(texts)}x{self.dimension} embeddings, got {arr.shape}")
        return arr

    def embed(self, text: str) -> EmbeddingVector:
        return EmbeddingVector.of(self.embed_many([text])[0], empty=not text.strip())


_DEFAULT = LexicalEmbedder()


@lru_cache(maxsize=16)
def _matrix(corpus: Dataset, embedder) -> tuple[np.ndarray, np.ndarray]:
    mat = embedder.embed_many(corpus.questions)
    norms = np.linalg.norm(mat, axis=1)
    mat.setflags(write=False)
    return mat, norms


def similarities(query: str, corpus: Dataset, embedder=None) -> np.ndarray:
    embedder = embedder or _DEFAULT
    if not len(corpus):
        raise EmptyCorpus("corpus is empty")
    mat, norms = _matrix(corpus, embedder)
    q = embedder.embed(query)
    if q.norm == 0:
        return np.zeros(len(corpus))
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (mat @ q.values) / (norms * q.norm)
    sims = np.where(norms > 0, sims, 0.0)
    # rounding keeps the order independent of summation order
    return np.round(sims, 12)


def nearest(query: str, corpus: Dataset, k: int = 1, embedder=None) -> list[tuple[Example, float]]:
    """Top-``k`` examples by cosine similarity; ties go to the lower corpus index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = similarities(query, corpus, embedder)
    order = np.lexsort((np.arange(len(sims)), -sims))[:k]
    return [(corpus[int(i)], float(sims[i])) for i in order]


def nn_parse(query: str, train: Dataset, embedder=None) -> str:
    """Gold parse of the single most similar training question."""
    return nearest(query, train, 1, embedder)[0][0].gold_parse


def select_demonstrations(query: str, pool: Dataset, k: int = DEFAULT_SHOTS, embedder=None) -> list[Example]:
    return [ex for ex, _ in nearest(query, pool, k, embedder)]
