"""Exhaustive cosine-similarity search over chunk embeddings, with optional reranking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidConfig, ZeroVector
from .ingest import Chunk
from .provider import Embedder, PairScorer

# scores equal to this many decimals count as ties, so float noise between
# numerically different but mathematically identical vectors cannot reorder them
TIE_DECIMALS = 12


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3
    rerank: bool = False
    rerank_pool: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidConfig(f"k must be >= 1, got {self.k}")
        if self.rerank_pool < self.k:
            raise InvalidConfig(f"rerank_pool ({self.rerank_pool}) must be >= k ({self.k})")


@dataclass(eq=False)
class EmbeddingIndex:
    """Chunk embeddings stored row-wise, ordered by chunk id."""

    chunk_ids: tuple[str, ...]
    vectors: np.ndarray
    chunks: dict[str, Chunk] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingIndex):
            return NotImplemented
        return (
            self.chunk_ids == other.chunk_ids
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
            and self.chunks == other.chunks
        )

    def save(self, path: str | Path) -> None:
        """Write the JSONL form: a ``{"dim": n}`` header, then one entry per chunk."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"dim": self.dim}) + "\n")
            for cid, vec in zip(self.chunk_ids, self.vectors):
                fh.write(json.dumps({"chunk_id": cid, "vector": vec.tolist()}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path, chunks: Iterable[Chunk]) -> EmbeddingIndex:
        lookup = {c.chunk_id: c for c in chunks}
        with open(path, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        if not rows or "dim" not in rows[0]:
            raise ValueError(f"{path}: missing {{'dim': n}} header line")
        dim = int(rows[0]["dim"])
        entries = rows[1:]
        if not entries:
            raise EmptyInput(f"{path}: index has no entries")
        for r in entries:
            if len(r["vector"]) != dim:
                raise DimensionMismatch(f"{path}: entry {r['chunk_id']} has dim {len(r['vector'])}, header says {dim}")
        missing = [r["chunk_id"] for r in entries if r["chunk_id"] not in lookup]
        if missing:
            raise KeyError(f"index refers to chunks absent from the chunk store: {missing[:5]}")
        ids = tuple(r["chunk_id"] for r in entries)
        return cls(ids, np.array([r["vector"] for r in entries], dtype=float), {i: lookup[i] for i in ids})


def build_index(chunks: Sequence[Chunk], embedder: Embedder) -> EmbeddingIndex:
    if len(chunks) == 0:
        raise EmptyInput("cannot build an index over zero chunks")
    ordered = sorted(chunks, key=lambda c: c.chunk_id)
    ids = tuple(c.chunk_id for c in ordered)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate chunk ids")
    vectors = np.asarray(embedder.embed([c.text for c in ordered], role="passage"), dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != len(ordered):
        raise DimensionMismatch(f"embedder returned shape {vectors.shape} for {len(ordered)} texts")
    return EmbeddingIndex(ids, vectors, {c.chunk_id: c for c in ordered})


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dims differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _rank(ids: Sequence[str], scores: Sequence[float], k: int) -> list[int]:
    order = sorted(range(len(ids)), key=lambda i: (-round(float(scores[i]), TIE_DECIMALS), ids[i]))
    return order[:k]


def cosine_scores(index: EmbeddingIndex, query_vector: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vector, dtype=float)
    if q.shape != (index.dim,):
        raise DimensionMismatch(f"query has shape {q.shape}, index dim is {index.dim}")
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(index.vectors, axis=1)
    if qn == 0.0 or not np.all(norms > 0.0):
        raise ZeroVector("zero vector in cosine scoring")
    return np.clip(index.vectors @ q / (norms * qn), -1.0, 1.0)


def retrieve_top_k(
    index: EmbeddingIndex,
    query: str,
    cfg: RetrievalConfig,
    embedder: Embedder,
    scorer: PairScorer | None = None,
) -> list[ScoredChunk]:
    """The ``cfg.k`` best chunks for ``query``, best first, ties by chunk id.

    With ``cfg.rerank`` the ``cfg.rerank_pool`` best chunks by cosine are
    rescored with ``scorer`` and the ranking uses those scores instead.
    """
    if len(index) == 0:
        raise EmptyInput("index is empty")
    qvec = np.asarray(embedder.embed([query], role="query"), dtype=float)[0]
    scores = cosine_scores(index, qvec).tolist()

    if not cfg.rerank:
        picked = _rank(index.chunk_ids, scores, cfg.k)
        return [ScoredChunk(index.chunks[index.chunk_ids[i]], scores[i]) for i in picked]

    if scorer is None:
        raise InvalidConfig("rerank requested but no scorer given")
    pool = _rank(index.chunk_ids, scores, cfg.rerank_pool)
    pool_ids = [index.chunk_ids[i] for i in pool]
    rescored = [float(s) for s in scorer.score_pairs(query, [index.chunks[c].text for c in pool_ids])]
    if len(rescored) != len(pool_ids):
        raise DimensionMismatch(f"scorer returned {len(rescored)} scores for {len(pool_ids)} candidates")
    picked = _rank(pool_ids, rescored, cfg.k)
    return [ScoredChunk(index.chunks[pool_ids[i]], rescored[i]) for i in picked]
