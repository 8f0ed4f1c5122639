"""Embedding providers, the content-hash cache, and embedding-based matching.

The local-hash provider is a deterministic, offline stand-in for a remote
embedding model: tokens are hashed into a fixed number of buckets, counts
accumulated, and the vector L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .matching import CandidateSibling, StatementContext, tokenize

logger = logging.getLogger(__name__)


class EmbeddingError(Exception):
    """Provider failure; carries the indices of the failed batch."""

    def __init__(self, message: str, indices: list[int] | None = None):
        super().__init__(message)
        self.indices = indices or []


@dataclass(frozen=True)
class EmbeddingVector:
    dimension: int
    components: tuple[float, ...]

    def __post_init__(self):
        if self.dimension != len(self.components):
            raise ValueError("dimension does not match component count")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.components == b.components:
        return 1.0 if any(a.components) else 0.0
    dot = sum(x * y for x, y in zip(a.components, b.components))
    na = math.sqrt(sum(x * x for x in a.components))
    nb = math.sqrt(sum(x * x for x in b.components))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


class LocalHashProvider:
    """Deterministic hashed token-frequency embeddings (offline)."""

    name = "local-hash"
    batch_size = 1024

    def __init__(self, dimension: int = 512):
        self.dimension = dimension
        self.model = f"hash-{dimension}"

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = [0.0] * self.dimension
            for token in tokenize(text):
                digest = hashlib.md5(token.encode()).hexdigest()
                vec[int(digest, 16) % self.dimension] += 1.0
            norm = math.sqrt(sum(x * x for x in vec))
            if norm > 0.0:
                vec = [x / norm for x in vec]
            out.append(vec)
        return out


class RemoteEmbeddingProvider:
    """POST {"input": texts, "model": name} -> {"data": [{"index", "embedding"}]}."""

    name = "remote"

    def __init__(self, url: str, model: str, api_key_env: str = "EMBED_API_KEY",
                 batch_size: int = 64, max_retries: int = 3,
                 session: requests.Session | None = None,
                 sleep=time.sleep):
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.session = session or requests.Session()
        self._sleep = sleep

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"input": texts, "model": self.model}
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.session.post(self.url, json=body, headers=headers,
                                         timeout=120)
                resp.raise_for_status()
                data = resp.json()["data"]
                return [row["embedding"]
                        for row in sorted(data, key=lambda r: r["index"])]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last = exc
                if attempt < self.max_retries:
                    self._sleep(2 ** attempt)
        raise EmbeddingError(f"embedding provider failed after retries: {last}")


class EmbeddingCache:
    """Content-hash keyed cache, optionally persisted as one JSON file.

    Keys are scoped by provider name and model. Corrupt entries (or a
    corrupt store) are dropped and recomputed transparently.
    """

    def __init__(self, store_path: str | Path | None = None):
        self.store_path = Path(store_path) if store_path else None
        self._lock = threading.Lock()
        self._data: dict[str, list[float]] = {}
        self._dirty = False
        if self.store_path and self.store_path.exists():
            try:
                loaded = json.loads(self.store_path.read_text(encoding="utf-8"))
                if isinstance(loaded, dict):
                    self._data = loaded
            except (ValueError, OSError):
                logger.warning("corrupt embedding cache ignored: %s", self.store_path)

    @staticmethod
    def key(provider, text: str) -> str:
        raw = f"{provider.name}|{provider.model}|{text}"
        return hashlib.sha256(raw.encode()).hexdigest()

    def get(self, key: str) -> list[float] | None:
        with self._lock:
            value = self._data.get(key)
        if value is None:
            return None
        if not isinstance(value, list) or not all(
                isinstance(x, (int, float)) for x in value):
            with self._lock:
                self._data.pop(key, None)  # corrupt entry, recompute
            return None
        return value

    def put(self, key: str, vector: list[float]) -> None:
        with self._lock:
            self._data[key] = list(vector)
            self._dirty = True

    def flush(self) -> None:
        if not self.store_path or not self._dirty:
            return
        with self._lock:
            tmp = self.store_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(self._data), encoding="utf-8")
            tmp.replace(self.store_path)
            self._dirty = False


def embed(texts: list[str], provider,
          cache: EmbeddingCache | None = None) -> list[EmbeddingVector]:
    """One vector per input text, batched, cache-backed, order preserving."""
    results: list[list[float] | None] = [None] * len(texts)
    missing: list[int] = []
    for i, text in enumerate(texts):
        if cache is not None:
            hit = cache.get(EmbeddingCache.key(provider, text))
            if hit is not None:
                results[i] = hit
                continue
        missing.append(i)
    batch_size = getattr(provider, "batch_size", 64)
    for start in range(0, len(missing), batch_size):
        indices = missing[start:start + batch_size]
        batch = [texts[i] for i in indices]
        try:
            vectors = provider.embed_batch(batch)
        except EmbeddingError as exc:
            exc.indices = indices
            raise
        if len(vectors) != len(batch):
            raise EmbeddingError(
                f"provider returned {len(vectors)} vectors for {len(batch)} texts",
                indices=indices)
        for i, vec in zip(indices, vectors):
            results[i] = vec
            if cache is not None:
                cache.put(EmbeddingCache.key(provider, texts[i]), vec)
    return [EmbeddingVector(dimension=len(v), components=tuple(v))
            for v in results]


def embedding_match(target: StatementContext, candidates: list[CandidateSibling],
                    theta: float, provider,
                    cache: EmbeddingCache | None = None) -> list[CandidateSibling]:
    """Retain candidates whose embedding cosine vs the target is >= theta."""
    if not -1.0 <= theta <= 1.0:
        raise ValueError("theta must be in [-1, 1]")
    if not candidates:
        return []
    texts = [target.rendered] + [c.context.rendered for c in candidates]
    vectors = embed(texts, provider, cache)
    target_vec = vectors[0]
    kept = []
    for cand, vec in zip(candidates, vectors[1:]):
        sim = cosine(target_vec, vec)
        cand.embedding_similarity = sim
        if sim >= theta:
            kept.append(cand)
    kept.sort(key=lambda c: (-(c.embedding_similarity or 0.0), c.key))
    return kept
