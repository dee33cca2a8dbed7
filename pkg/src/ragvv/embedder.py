"""Text-to-vector providers: a remote sentence-embedding client and a
deterministic hashed-feature fallback for offline runs.

Both providers return unit-normalized float64 vectors of a fixed dimension
(default 384, the output size of the MiniLM-family sentence encoders the
remote endpoint is expected to serve). The retrieval stage behaves
identically whichever provider is plugged in.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

__all__ = [
    "DEFAULT_DIM",
    "NotNormalizableError",
    "EmbeddingError",
    "TransientEmbeddingError",
    "EmbeddingProvider",
    "normalize",
    "hashed_embed",
    "embed",
    "HashingEmbedder",
    "RemoteEmbedder",
    "CachedEmbedder",
]

DEFAULT_DIM = 384
_WORD_RE = re.compile(r"[A-Za-z0-9_]+")


class NotNormalizableError(ValueError):
    """Zero vector: direction undefined."""


class EmbeddingError(RuntimeError):
    """Provider failure that retrying will not fix (bad dim, bad reply)."""


class TransientEmbeddingError(EmbeddingError):
    """Transport-level failure worth retrying."""


class EmbeddingProvider(Protocol):
    dim: int

    def embed_batch(self, texts: list[str]) -> np.ndarray: ...


def normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||, in double precision. Raises NotNormalizableError on zero."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise NotNormalizableError("zero vector cannot be normalized")
    return v / norm


def _feature_hash(feature: str) -> tuple[int, float]:
    """(bucket hash, sign) for one feature, stable across processes."""
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=9).digest()
    bucket = int.from_bytes(digest[:8], "big")
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def hashed_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed-hash unigram+bigram counts in `dim` buckets, normalized.

    Pure function of (text, dim). Text with no word tokens yields the zero
    vector (the one case the unit-norm invariant excepts).
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    tokens = _WORD_RE.findall(text)
    vec = np.zeros(dim, dtype=np.float64)
    features = tokens + [f"{a}\x1f{b}" for a, b in zip(tokens, tokens[1:])]
    for feature in features:
        bucket, sign = _feature_hash(feature)
        vec[bucket % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed one text through a provider; enforces the unit-norm contract."""
    if not text:
        raise ValueError("cannot embed empty text")
    vec = provider.embed_batch([text])[0]
    if vec.shape != (provider.dim,):
        raise EmbeddingError(f"provider returned dim {vec.shape}, expected ({provider.dim},)")
    return vec


class HashingEmbedder:
    """Deterministic local provider; no model, no network."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        return np.stack([hashed_embed(t, self.dim) for t in texts])


class RemoteEmbedder:
    """Client for a minimal embedding HTTP service.

    Wire contract: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    Transient transport failures (connection errors, 429, 5xx) are retried
    with exponential backoff before surfacing as TransientEmbeddingError.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int = DEFAULT_DIM,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 5,
        base_delay: float = 1.0,
        sleeper=time.sleep,
    ):
        self.endpoint = endpoint
        self.dim = dim
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self._sleep = sleeper

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            token = os.environ.get(self.api_key_env)
            if not token:
                raise EmbeddingError(f"credential env var {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post_once(self, texts: list[str]) -> np.ndarray:
        try:
            resp = requests.post(
                self.endpoint, json={"texts": texts}, headers=self._headers(), timeout=self.timeout
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientEmbeddingError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientEmbeddingError(f"server answered {resp.status_code}")
        if resp.status_code >= 400:
            raise EmbeddingError(f"embedding request rejected: {resp.status_code} {resp.text[:200]}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise EmbeddingError(f"malformed embedding reply: {exc}") from exc
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape != (len(texts), self.dim):
            raise EmbeddingError(f"reply shape {arr.shape}, expected ({len(texts)}, {self.dim})")
        return np.stack([normalize(row) for row in arr])

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        delay = self.base_delay
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self._post_once(texts)
            except TransientEmbeddingError:
                if attempt == self.max_attempts:
                    raise
                self._sleep(delay)
                delay *= 2.0
        raise AssertionError("unreachable")


class CachedEmbedder:
    """Content-hash read-through cache around any provider.

    Entries persist as one JSON line per text hash beside the index, so
    repeat runs never re-embed unchanged documents. Appends happen under a
    lock as single write calls.
    """

    def __init__(self, provider: EmbeddingProvider, cache_path: str | Path):
        self.provider = provider
        self.dim = provider.dim
        self.cache_path = Path(cache_path)
        self._lock = threading.Lock()
        self._cache: dict[str, np.ndarray] = {}
        if self.cache_path.exists():
            with self.cache_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    vec = np.asarray(rec["vector"], dtype=np.float64)
                    if vec.shape == (self.dim,):
                        self._cache[rec["hash"]] = vec

    @staticmethod
    def _key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        keys = [self._key(t) for t in texts]
        with self._lock:
            missing = [(i, t) for i, (k, t) in enumerate(zip(keys, texts)) if k not in self._cache]
        if missing:
            fresh = self.provider.embed_batch([t for _, t in missing])
            with self._lock:
                lines = []
                for (i, _), vec in zip(missing, fresh):
                    key = keys[i]
                    if key not in self._cache:
                        self._cache[key] = vec
                        lines.append(json.dumps({"hash": key, "vector": vec.tolist()}) + "\n")
                if lines:
                    self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                    with self.cache_path.open("a", encoding="utf-8") as fh:
                        fh.write("".join(lines))
        with self._lock:
            return np.stack([self._cache[k] for k in keys])
