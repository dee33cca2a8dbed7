"""Exact in-memory cosine index with deterministic top-k retrieval.

Brute-force over all entries, double-precision scores, ties broken by
doc_id ascending. No approximation: the corpus this serves is ~1000
documents, so a full scan is microseconds and exactness is free.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import KnowledgeDocument

__all__ = ["ScoredDoc", "VectorStore", "cosine", "SNAPSHOT_VERSION"]

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b) / (||a||*||b||), accumulated in double precision."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm input")
    return float(np.dot(a, b) / (na * nb))


class VectorStore:
    """Single-writer build phase, then freeze() for concurrent queries."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._ids: list[str] = []
        self._id_set: set[str] = set()
        self._vectors: list[np.ndarray] = []
        self._payloads: dict[str, KnowledgeDocument] = {}
        self._matrix: np.ndarray | None = None
        self._norms: np.ndarray | None = None
        self._id_array: np.ndarray | None = None
        self._frozen = False

    def __len__(self) -> int:
        return len(self._ids)

    def add(self, doc_id: str, vector: np.ndarray, payload: KnowledgeDocument | None = None) -> None:
        if self._frozen:
            raise RuntimeError("index is frozen")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: got {vec.shape}, index dim {self.dim}")
        if doc_id in self._id_set:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        if float(np.linalg.norm(vec)) == 0.0:
            raise ValueError(f"zero-norm vector for {doc_id!r}")
        self._id_set.add(doc_id)
        self._ids.append(doc_id)
        self._vectors.append(vec)
        if payload is not None:
            self._payloads[doc_id] = payload
        self._matrix = None

    def freeze(self) -> None:
        self._materialize()
        self._frozen = True

    def _materialize(self) -> None:
        if self._matrix is None:
            if not self._ids:
                raise RuntimeError("index is empty")
            self._matrix = np.ascontiguousarray(np.stack(self._vectors))
            self._norms = np.linalg.norm(self._matrix, axis=1)
            self._id_array = np.array(self._ids)

    def top_k(self, query: np.ndarray, k: int) -> list[ScoredDoc]:
        """min(k, count) hits sorted by (score desc, doc_id asc); exact scan."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._ids:
            raise RuntimeError("index is empty")
        self._materialize()
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query dimension {q.shape} does not match index dim {self.dim}")
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise ValueError("zero-norm query")
        scores = kernels.cosine_scores(self._matrix, q, self._norms, qnorm)
        # primary key: score descending; secondary: doc_id ascending
        order = np.lexsort((self._id_array, -scores))
        take = order[: min(k, len(self._ids))]
        return [ScoredDoc(str(self._id_array[i]), float(scores[i])) for i in take]

    def payload(self, doc_id: str) -> KnowledgeDocument:
        try:
            return self._payloads[doc_id]
        except KeyError:
            raise KeyError(f"no payload attached for doc {doc_id!r}") from None

    def save(self, path: str | Path) -> None:
        """Snapshot vectors + ids with a version header; reload is bit-exact."""
        self._materialize()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(
                fh,
                version=np.array([SNAPSHOT_VERSION], dtype=np.int64),
                dim=np.array([self.dim], dtype=np.int64),
                ids=self._id_array,
                vectors=self._matrix,
            )

    @classmethod
    def load(cls, path: str | Path, docs: list[KnowledgeDocument] | None = None) -> "VectorStore":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["version"][0])
            if version != SNAPSHOT_VERSION:
                raise ValueError(f"snapshot version {version} unsupported (want {SNAPSHOT_VERSION})")
            dim = int(data["dim"][0])
            ids = [str(x) for x in data["ids"]]
            vectors = np.asarray(data["vectors"], dtype=np.float64)
        store = cls(dim)
        by_id = {d.doc_id: d for d in docs} if docs else {}
        for doc_id, vec in zip(ids, vectors):
            store.add(doc_id, vec, by_id.get(doc_id))
        store.freeze()
        return store
