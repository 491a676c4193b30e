"""Pair scoring under five similarity modes and transitive grouping of matches."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .blocking import Block
from .embeddings import EmbeddingTable
from .graph import KnowledgeGraph
from .unionfind import UnionFind


class SimilarityMode(str, Enum):
    EGO = "ego"
    NEIGHBOR = "neighbor"
    TYPE_AWARE_NEIGHBOR = "type_aware_neighbor"
    EGO_PLUS_NEIGHBOR = "ego_plus_neighbor"
    EGO_PLUS_TYPE_AWARE = "ego_plus_type_aware"


CANONICAL_POLICIES = ("seeded_random", "min_id")


@dataclass(frozen=True)
class ScoredPair:
    a: str
    b: str
    similarity: float

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"a pair needs two distinct entities, got {self.a!r} twice")
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


@dataclass(frozen=True)
class MatchGroup:
    members: frozenset[str]
    canonical: str

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a match group needs at least one member")
        if self.canonical not in self.members:
            raise ValueError(f"canonical {self.canonical!r} is not a group member")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def others(self) -> list[str]:
        """Non-canonical members, sorted by id."""
        return sorted(self.members - {self.canonical})


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, defined as 0 when either vector is all zeros."""
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class SimilarityScorer:
    """Scores entity pairs for one (graph, table, mode), caching per-entity vectors.

    ``type_normalization`` controls the type-aware average: ``"shared"``
    averages per-type cosines over types present in both neighborhoods;
    ``"all"`` divides the sum by the size of the graph's whole type set.
    """

    def __init__(
        self,
        graph: KnowledgeGraph,
        table: EmbeddingTable,
        mode: SimilarityMode | str = SimilarityMode.EGO,
        type_normalization: str = "shared",
    ):
        if type_normalization not in ("shared", "all"):
            raise ValueError("type_normalization must be 'shared' or 'all'")
        self.graph = graph
        self.table = table
        self.mode = SimilarityMode(mode)
        self.type_normalization = type_normalization
        self.type_order = sorted(graph.type_set)
        self._vectors: dict[str, np.ndarray] = {}
        self._type_means: dict[str, dict[str, np.ndarray]] = {}

    def _neighbor_mean(self, e: str) -> np.ndarray:
        nbrs = sorted(self.graph.neighbors(e))
        if not nbrs:
            return np.zeros(self.table.width)
        return self.table.matrix(nbrs).mean(axis=0)

    def type_means(self, e: str) -> dict[str, np.ndarray]:
        """Mean neighbor vector per neighbor type (only types present in the neighborhood)."""
        if e not in self._type_means:
            by_type: dict[str, list[str]] = {}
            for n in sorted(self.graph.neighbors(e)):
                by_type.setdefault(self.graph.entity(n).type_label, []).append(n)
            self._type_means[e] = {t: self.table.matrix(ids).mean(axis=0) for t, ids in by_type.items()}
        return self._type_means[e]

    def _type_aware_vector(self, e: str) -> np.ndarray:
        means = self.type_means(e)
        zero = np.zeros(self.table.width)
        return np.concatenate([means.get(t, zero) for t in self.type_order]) if self.type_order else zero

    def vector(self, e: str) -> np.ndarray:
        if e not in self._vectors:
            mode = self.mode
            if mode is SimilarityMode.EGO:
                v = self.table.vector(e)
            elif mode is SimilarityMode.NEIGHBOR:
                v = self._neighbor_mean(e)
            elif mode is SimilarityMode.TYPE_AWARE_NEIGHBOR:
                v = self._type_aware_vector(e)
            elif mode is SimilarityMode.EGO_PLUS_NEIGHBOR:
                v = np.concatenate([self.table.vector(e), self._neighbor_mean(e)])
            else:
                v = np.concatenate([self.table.vector(e), self._type_aware_vector(e)])
            self._vectors[e] = np.asarray(v, dtype=float)
        return self._vectors[e]

    def similarity(self, a: str, b: str) -> float:
        if self.mode is not SimilarityMode.TYPE_AWARE_NEIGHBOR:
            return cosine(self.vector(a), self.vector(b))
        ma, mb = self.type_means(a), self.type_means(b)
        shared = sorted(ma.keys() & mb.keys())
        if not shared:
            return 0.0
        total = sum(cosine(ma[t], mb[t]) for t in shared)
        denom = len(shared) if self.type_normalization == "shared" else len(self.type_order)
        return total / denom

    def score_pairs(self, pairs: Iterable[tuple[str, str]]) -> list[ScoredPair]:
        return [ScoredPair(a, b, self.similarity(a, b)) for a, b in sorted(pairs)]


def entity_vector(
    graph: KnowledgeGraph, table: EmbeddingTable, e: str, mode: SimilarityMode | str = SimilarityMode.EGO
) -> np.ndarray:
    return SimilarityScorer(graph, table, mode).vector(e)


def pair_similarity(
    graph: KnowledgeGraph,
    table: EmbeddingTable,
    a: str,
    b: str,
    mode: SimilarityMode | str = SimilarityMode.EGO,
    type_normalization: str = "shared",
) -> float:
    return SimilarityScorer(graph, table, mode, type_normalization).similarity(a, b)


def candidate_pairs(blocks: Iterable[Block]) -> set[tuple[str, str]]:
    """All within-block unordered pairs, sorted within each pair and deduplicated."""
    out: set[tuple[str, str]] = set()
    for block in blocks:
        out.update(combinations(sorted(block.members), 2))
    return out


def select_canonical(members: Iterable[str], policy: str = "seeded_random", seed: int = 0) -> str:
    ordered = sorted(members)
    if not ordered:
        raise ValueError("cannot pick a canonical member from an empty group")
    if policy == "min_id":
        return ordered[0]
    if policy == "seeded_random":
        digest = hashlib.sha256("\x1f".join([str(seed), *ordered]).encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big")).choice(ordered)
    raise ValueError(f"unknown canonical policy {policy!r}")


def _groups_from(uf: UnionFind, policy: str, seed: int) -> list[MatchGroup]:
    groups = [frozenset(g) for g in uf.groups() if len(g) > 1]
    return [MatchGroup(g, select_canonical(g, policy, seed)) for g in sorted(groups, key=min)]


def group_by_threshold(
    pairs: Iterable[ScoredPair], delta: float, policy: str = "seeded_random", seed: int = 0
) -> list[MatchGroup]:
    """Union every pair with similarity strictly above ``delta``; return the resulting classes."""
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    uf = UnionFind()
    for p in sorted(pairs, key=lambda p: p.key):
        if p.similarity > delta:
            uf.union(p.a, p.b)
    return _groups_from(uf, policy, seed)


@dataclass
class RatioGrouping:
    groups: list[MatchGroup]
    merges: int
    target_merges: int
    achieved_ratio: float


def group_by_target_ratio(
    pairs: Iterable[ScoredPair],
    entity_count: int,
    ratio: float,
    policy: str = "seeded_random",
    seed: int = 0,
) -> RatioGrouping:
    """Greedily union the most similar pairs until ``floor(ratio * entity_count)`` merges.

    Each union that joins two distinct sets removes one prospective entity.
    Pairs are visited by descending similarity, ties by pair order. When the
    pairs run out first, the achieved ratio is lower than requested.
    """
    if entity_count < 1:
        raise ValueError("entity_count must be >= 1")
    if not 0 <= ratio < 1:
        raise ValueError("ratio must be in [0, 1)")
    target = math.floor(ratio * entity_count)
    uf = UnionFind()
    merges = 0
    if target > 0:
        for p in sorted(pairs, key=lambda p: (-p.similarity, p.a, p.b)):
            if uf.union(p.a, p.b):
                merges += 1
                if merges >= target:
                    break
    return RatioGrouping(_groups_from(uf, policy, seed), merges, target, merges / entity_count)


def score_blocks(
    graph: KnowledgeGraph,
    table: EmbeddingTable,
    blocks: Sequence[Block],
    mode: SimilarityMode | str = SimilarityMode.EGO,
    type_normalization: str = "shared",
) -> list[ScoredPair]:
    scorer = SimilarityScorer(graph, table, mode, type_normalization)
    return scorer.score_pairs(candidate_pairs(blocks))
