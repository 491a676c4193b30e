"""Blocking: split the entity set into candidate blocks before pairwise matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .graph import KnowledgeGraph

STRATEGIES = ("semantic", "type", "structural")
DEFAULT_MAX_BLOCK_SIZE = 200


@dataclass(frozen=True)
class Block:
    id: int
    members: frozenset[str]
    provenance: str
    origin: str | None = None

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a block needs at least one member")
        if self.provenance not in STRATEGIES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    sse_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def sse(self) -> float:
        return self.sse_history[-1] if self.sse_history else 0.0


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding over the distinct rows of ``X``."""
    distinct = np.unique(X, axis=0)
    k = min(k, len(distinct))
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = distinct[rng.integers(len(distinct))]
    closest = _sq_dists(distinct, centroids[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # remaining points coincide with chosen centroids
            centroids = centroids[:i]
            break
        idx = rng.choice(len(distinct), p=closest / total)
        centroids[i] = distinct[idx]
        closest = np.minimum(closest, _sq_dists(distinct, centroids[i : i + 1]).ravel())
    return centroids


def kmeans_fit(X: np.ndarray, k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    ``k`` is lowered to the number of distinct rows. Clusters that lose all
    members keep their previous centroid, which keeps the within-cluster SSE
    non-increasing from one iteration to the next.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("kmeans needs a non-empty 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    C = kmeans_plusplus(X, k, rng)
    labels = np.argmin(_sq_dists(X, C), axis=1)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        for j in range(len(C)):
            mask = labels == j
            if mask.any():
                C[j] = X[mask].mean(axis=0)
        d = _sq_dists(X, C)
        history.append(float(d[np.arange(len(X)), labels].sum()))
        new_labels = np.argmin(d, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    history.append(float(_sq_dists(X, C)[np.arange(len(X)), labels].sum()))
    return KMeansResult(labels, C, history, n_iter)


def kmeans(vectors: Mapping[str, Sequence[float]], k: int, seed: int = 0, max_iters: int = 100) -> dict[str, int]:
    """Cluster ``vectors`` and return id -> cluster index (indices compacted to 0..m-1)."""
    if not vectors:
        raise ValueError("kmeans needs at least one vector")
    ids = list(vectors)
    result = kmeans_fit(np.stack([np.asarray(vectors[i], float) for i in ids]), k, seed, max_iters)
    remap: dict[int, int] = {}
    return {i: remap.setdefault(int(lab), len(remap)) for i, lab in zip(ids, result.labels)}


def semantic_k(n_entities: int) -> int:
    """``sqrt(n / 10)`` rounded half-up, at least 1."""
    return max(1, math.floor(math.sqrt(n_entities / 10) + 0.5))


def _clusters_to_blocks(assign: Mapping[str, int], provenance: str, origin: str | None, start: int) -> list[Block]:
    members: dict[int, list[str]] = {}
    for eid, c in assign.items():
        members.setdefault(c, []).append(eid)
    return [
        Block(start + i, frozenset(m), provenance, origin)
        for i, m in enumerate(sorted(members.values(), key=min))
    ]


def semantic_blocks(graph: KnowledgeGraph, table: EmbeddingTable, seed: int = 0) -> list[Block]:
    ids = sorted(graph.entity_ids)
    if not ids:
        return []
    table.check_coverage(ids)
    assign = kmeans({i: table.vector(i) for i in ids}, semantic_k(len(ids)), seed)
    return _clusters_to_blocks(assign, "semantic", None, 0)


def type_blocks(
    graph: KnowledgeGraph,
    table: EmbeddingTable | None = None,
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE,
    seed: int = 0,
) -> list[Block]:
    """One block per entity type; oversized type blocks are split by k-means."""
    if max_block_size < 2:
        raise ValueError("max_block_size must be >= 2")
    by_type: dict[str, list[str]] = {}
    for e in sorted(graph.entities, key=lambda e: e.id):
        by_type.setdefault(e.type_label, []).append(e.id)
    blocks: list[Block] = []
    for label in sorted(by_type):
        ids = by_type[label]
        if len(ids) <= max_block_size:
            blocks.append(Block(len(blocks), frozenset(ids), "type", label))
            continue
        if table is None:
            raise ValueError(f"type block {label!r} has {len(ids)} members; subdividing needs embeddings")
        table.check_coverage(ids)
        k = math.ceil(len(ids) / max_block_size)
        assign = kmeans({i: table.vector(i) for i in ids}, k, seed)
        blocks.extend(_clusters_to_blocks(assign, "type", label, len(blocks)))
    return blocks


def structural_blocks(graph: KnowledgeGraph) -> list[Block]:
    """One block per distinct neighbor set of size >= 2; the origin is the shared neighbor."""
    seen: set[frozenset[str]] = set()
    blocks: list[Block] = []
    for eid in sorted(graph.entity_ids):
        nbrs = graph.neighbors(eid)
        if len(nbrs) >= 2 and nbrs not in seen:
            seen.add(nbrs)
            blocks.append(Block(len(blocks), nbrs, "structural", eid))
    return blocks


def make_blocks(
    graph: KnowledgeGraph,
    strategy: str,
    table: EmbeddingTable | None = None,
    seed: int = 0,
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE,
) -> list[Block]:
    if strategy == "semantic":
        if table is None:
            raise ValueError("semantic blocking needs an embedding table")
        return semantic_blocks(graph, table, seed)
    if strategy == "type":
        return type_blocks(graph, table, max_block_size, seed)
    if strategy == "structural":
        return structural_blocks(graph)
    raise ValueError(f"unknown blocking strategy {strategy!r}")
