"""Sentence embeddings: providers, on-disk cache, cosine similarity.

Two provider kinds exist. The reference provider is a fully deterministic
hashed bag-of-words embedder that stands in for a transformer model during
tests and desk-scale runs; the remote provider speaks a small HTTP
protocol (POST {endpoint}/embed) to whatever model server is configured.
Vectors are stored and served as unit-norm float32; cosine accumulates in
float64.
"""

import hashlib
import logging
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import CacheError, ProviderError, ShapeError, UndefinedSimilarityError

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 64
DEFAULT_REFERENCE_DIMS = 256

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class EmbeddingVector:
    components: np.ndarray  # float32, unit norm unless empty

    @property
    def dims(self) -> int:
        return int(self.components.shape[0])

    @property
    def empty(self) -> bool:
        return not np.any(self.components)


def _normalize(raw: np.ndarray) -> EmbeddingVector:
    """Unit-normalize in float64, store float32. Zero vectors stay zero."""
    v64 = np.asarray(raw, dtype=np.float64)
    norm = float(np.linalg.norm(v64))
    if norm == 0.0:
        return EmbeddingVector(components=np.zeros(v64.shape[0], dtype=np.float32))
    return EmbeddingVector(components=(v64 / norm).astype(np.float32))


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def reference_embed(text: str, dims: int = DEFAULT_REFERENCE_DIMS) -> EmbeddingVector:
    """Deterministic hashed bag-of-words embedding.

    Tokens are lowercased alphanumeric runs; each token increments the
    bucket FNV-1a(token) mod dims; the count vector is L2-normalized. An
    empty token list yields the zero vector, flagged empty and excluded
    from similarity.
    """
    if dims < 1:
        raise ShapeError("dims must be >= 1")
    counts = np.zeros(dims, dtype=np.float64)
    for token in tokenize(text):
        counts[fnv1a64(token.encode("utf-8")) % dims] += 1.0
    return _normalize(counts)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1], clamped against rounding."""
    if u.dims != v.dims:
        raise ShapeError(f"dims mismatch: {u.dims} vs {v.dims}")
    if u.empty or v.empty:
        raise UndefinedSimilarityError("similarity against an empty embedding is undefined")
    a = u.components.astype(np.float64)
    b = v.components.astype(np.float64)
    value = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class ReferenceProvider:
    """Deterministic in-process provider (hashed bag-of-words)."""

    dims: int = DEFAULT_REFERENCE_DIMS
    kind: str = "reference"
    model_name: str = "fnv1a-bow"

    @property
    def provider_id(self) -> str:
        return f"reference-{self.dims}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [reference_embed(t, self.dims).components for t in texts]


@dataclass(frozen=True)
class RemoteProvider:
    """HTTP provider: POST {endpoint}/embed {"model", "texts"} -> {"vectors"}."""

    endpoint: str
    model_name: str
    dims: int
    kind: str = "remote"
    timeout_s: float = 60.0

    @property
    def provider_id(self) -> str:
        return f"remote-{re.sub(r'[^A-Za-z0-9._-]+', '_', self.model_name)}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        url = self.endpoint.rstrip("/") + "/embed"
        try:
            resp = requests.post(
                url, json={"model": self.model_name, "texts": list(texts)}, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise ProviderError(f"embedding request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"embedding provider returned HTTP {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError(
                f"provider returned {len(vectors) if isinstance(vectors, list) else 'non-list'} "
                f"vectors for {len(texts)} texts"
            )
        out = []
        for i, vec in enumerate(vectors):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != self.dims:
                raise ProviderError(f"vector {i} has dims {arr.shape}, expected ({self.dims},)")
            out.append(arr)
        return out


class EmbeddingCache:
    """File-per-text embedding cache.

    Layout: ``root/{provider_id}/{model}/{sha256(text)}`` where the file is
    4 bytes little-endian unsigned dims followed by dims little-endian
    float32 components. Hits are bitwise-identical to what was stored.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _entry_path(self, provider, text: str) -> Path:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        model = re.sub(r"[^A-Za-z0-9._-]+", "_", provider.model_name)
        return self.root / provider.provider_id / model / digest

    def get(self, provider, text: str) -> EmbeddingVector | None:
        path = self._entry_path(provider, text)
        if not path.exists():
            return None
        data = path.read_bytes()
        if len(data) < 4:
            path.unlink(missing_ok=True)
            raise CacheError(f"corrupt cache entry {path.name} (truncated header); invalidated")
        (dims,) = struct.unpack("<I", data[:4])
        if len(data) != 4 + 4 * dims:
            path.unlink(missing_ok=True)
            raise CacheError(f"corrupt cache entry {path.name} (bad length); invalidated")
        components = np.frombuffer(data[4:], dtype="<f4").astype(np.float32)
        return EmbeddingVector(components=components)

    def put(self, provider, text: str, vector: EmbeddingVector) -> None:
        path = self._entry_path(provider, text)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = struct.pack("<I", vector.dims) + vector.components.astype("<f4").tobytes()
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(payload)
        tmp.replace(path)


def embed_with_cache(
    provider,
    texts: list[str],
    cache: EmbeddingCache | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[EmbeddingVector]:
    """Embed ``texts`` in input order, via the cache when one is given.

    Unique texts are deduplicated, cache misses go to the provider in
    batches of ``batch_size``, results are normalized and stored. Provider
    errors propagate with a count of vectors completed before the failure.
    """
    if batch_size < 1:
        raise ShapeError("batch_size must be >= 1")
    unique: list[str] = []
    seen: set[str] = set()
    for t in texts:
        if t not in seen:
            seen.add(t)
            unique.append(t)

    resolved: dict[str, EmbeddingVector] = {}
    misses: list[str] = []
    for t in unique:
        hit = cache.get(provider, t) if cache is not None else None
        if hit is not None:
            resolved[t] = hit
        else:
            misses.append(t)

    for start in range(0, len(misses), batch_size):
        batch = misses[start : start + batch_size]
        try:
            raw_vectors = provider.embed_batch(batch)
        except ProviderError as exc:
            raise ProviderError(
                f"batch of {len(batch)} starting at {start}: {exc}", completed=len(resolved)
            ) from exc
        for text, raw in zip(batch, raw_vectors):
            vec = _normalize(np.asarray(raw, dtype=np.float64))
            if vec.dims != provider.dims:
                raise ProviderError(
                    f"provider returned dims {vec.dims}, expected {provider.dims} "
                    f"(batch starting at {start})",
                    completed=len(resolved),
                )
            if cache is not None:
                cache.put(provider, text, vec)
            resolved[text] = vec

    return [resolved[t] for t in texts]
