"""Knowledge-graph data model.

A :class:`KnowledgeGraph` is an immutable snapshot of entities and typed,
directed triples. Storage keeps triple direction; neighborhoods and connected
components treat edges as undirected.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, Sequence

from .unionfind import UnionFind

UNKNOWN_TYPE = "UNKNOWN"

TripleKey = tuple[str, str, str]


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    entity_type: str | None = None
    description: str = ""
    source_chunk: str | None = None

    @property
    def type_label(self) -> str:
        """Type used for blocking and type-aware similarity; untyped entities map to ``UNKNOWN``."""
        return self.entity_type or UNKNOWN_TYPE


@dataclass(frozen=True)
class Triple:
    source: str
    relation: str
    target: str
    description: str = ""
    source_chunk: str | None = None

    @property
    def key(self) -> TripleKey:
        return (self.source, self.relation, self.target)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str


@dataclass
class GraphStats:
    entity_count: int = 0
    triple_count: int = 0
    relation_label_count: int = 0
    avg_description_tokens: float = 0.0
    per_type_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "entity_count": self.entity_count,
            "triple_count": self.triple_count,
            "relation_label_count": self.relation_label_count,
            "avg_description_tokens": self.avg_description_tokens,
            "per_type_counts": dict(sorted(self.per_type_counts.items())),
        }


def _entity_sort_key(e: Entity) -> tuple:
    return (e.id, e.name, e.entity_type or "", e.description, e.source_chunk or "")


def _triple_sort_key(t: Triple) -> tuple:
    return (t.source, t.relation, t.target, t.description, t.source_chunk or "")


class KnowledgeGraph:
    """Entities plus ordered triples.

    The constructor does not enforce integrity so that malformed inputs can be
    inspected with :func:`validate`. Every pipeline stage validates on entry.
    """

    def __init__(self, entities: Iterable[Entity] = (), triples: Iterable[Triple] = ()):
        self._entities: tuple[Entity, ...] = tuple(entities)
        self._triples: tuple[Triple, ...] = tuple(triples)
        self._index: dict[str, Entity] = {}
        for e in self._entities:
            self._index.setdefault(e.id, e)

    @property
    def entities(self) -> tuple[Entity, ...]:
        return self._entities

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    @property
    def entity_ids(self) -> list[str]:
        return [e.id for e in self._entities]

    @cached_property
    def type_set(self) -> frozenset[str]:
        return frozenset(e.type_label for e in self._entities)

    @cached_property
    def relation_labels(self) -> frozenset[str]:
        return frozenset(t.relation for t in self._triples)

    def __len__(self) -> int:
        return len(self._entities)

    def __contains__(self, entity_id: object) -> bool:
        return entity_id in self._index

    def __iter__(self) -> Iterator[Entity]:
        return iter(self._entities)

    def entity(self, entity_id: str) -> Entity:
        try:
            return self._index[entity_id]
        except KeyError:
            raise KeyError(f"unknown entity id {entity_id!r}") from None

    @cached_property
    def _adjacency(self) -> dict[str, frozenset[str]]:
        adj: dict[str, set[str]] = defaultdict(set)
        for t in self._triples:
            adj[t.source].add(t.target)
            adj[t.target].add(t.source)
        return {k: frozenset(v) for k, v in adj.items()}

    def neighbors(self, entity_id: str) -> frozenset[str]:
        if entity_id not in self._index:
            raise KeyError(f"unknown entity id {entity_id!r}")
        return self._adjacency.get(entity_id, frozenset())

    def canonical_form(self) -> tuple[tuple[Entity, ...], tuple[Triple, ...]]:
        return (
            tuple(sorted(self._entities, key=_entity_sort_key)),
            tuple(sorted(self._triples, key=_triple_sort_key)),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.canonical_form() == other.canonical_form()

    def __hash__(self) -> int:
        return hash(self.canonical_form())

    def __repr__(self) -> str:
        return f"KnowledgeGraph(entities={len(self._entities)}, triples={len(self._triples)})"

    def with_triples(self, triples: Iterable[Triple]) -> KnowledgeGraph:
        return KnowledgeGraph(self._entities, triples)

    def with_entities(self, entities: Iterable[Entity]) -> KnowledgeGraph:
        return KnowledgeGraph(entities, self._triples)


class GraphBuilder:
    """Single-writer helper for assembling a graph incrementally."""

    def __init__(self) -> None:
        self._entities: dict[str, Entity] = {}
        self._triples: list[Triple] = []

    def add_entity(self, entity: Entity) -> Entity:
        if entity.id in self._entities:
            raise ValueError(f"duplicate entity id {entity.id!r}")
        self._entities[entity.id] = entity
        return entity

    def ensure_entity(self, entity_id: str, name: str | None = None, **fields) -> Entity:
        if entity_id not in self._entities:
            self._entities[entity_id] = Entity(entity_id, name if name is not None else entity_id, **fields)
        return self._entities[entity_id]

    def add_triple(self, triple: Triple) -> Triple:
        self._triples.append(triple)
        return triple

    def build(self) -> KnowledgeGraph:
        return KnowledgeGraph(self._entities.values(), self._triples)


def neighbors(graph: KnowledgeGraph, entity_id: str) -> frozenset[str]:
    return graph.neighbors(entity_id)


def validate(graph: KnowledgeGraph) -> list[Violation]:
    """Return every invariant violation; an empty list means the graph is well formed."""
    report: list[Violation] = []
    seen: set[str] = set()
    for e in graph.entities:
        if not e.id:
            report.append(Violation("empty_id", repr(e.name), "entity has an empty id"))
        if e.id in seen:
            report.append(Violation("duplicate_id", e.id, f"entity id {e.id!r} appears more than once"))
        seen.add(e.id)
        if not e.name:
            report.append(Violation("empty_name", e.id, f"entity {e.id!r} has an empty name"))
    for i, t in enumerate(graph.triples):
        label = f"triple #{i} ({t.source!r}, {t.relation!r}, {t.target!r})"
        if not t.relation:
            report.append(Violation("empty_relation", label, f"{label} has an empty relation label"))
        for end in dict.fromkeys((t.source, t.target)):
            if end not in seen:
                report.append(
                    Violation("dangling_endpoint", label, f"{label} references missing entity {end!r}")
                )
    return report


def connected_components(graph: KnowledgeGraph) -> list[frozenset[str]]:
    """Weakly connected components, ordered by smallest member id."""
    uf = UnionFind(graph.entity_ids)
    for t in graph.triples:
        if t.source in uf and t.target in uf:
            uf.union(t.source, t.target)
    return sorted((frozenset(c) for c in uf.groups()), key=min)


def graph_stats(graph: KnowledgeGraph, tokenizer: Callable[[str], int] = whitespace_tokens) -> GraphStats:
    n = len(graph.entities)
    avg = sum(tokenizer(e.description) for e in graph.entities) / n if n else 0.0
    return GraphStats(
        entity_count=n,
        triple_count=len(graph.triples),
        relation_label_count=len(graph.relation_labels),
        avg_description_tokens=float(avg),
        per_type_counts=dict(Counter(e.type_label for e in graph.entities)),
    )


def graph_from_chunks(
    chunks: Sequence[Sequence[tuple[str, str, str]]],
    chunk_ids: Sequence[str] | None = None,
    descriptions: dict[str, str] | None = None,
) -> KnowledgeGraph:
    """Assemble a graph from per-chunk extractions without any deduplication.

    Each chunk's mentions get ids scoped to that chunk, so the same surface
    name extracted from two chunks yields two distinct entities.
    """
    chunk_ids = list(chunk_ids) if chunk_ids is not None else [f"c{m}" for m in range(len(chunks))]
    descriptions = descriptions or {}
    builder = GraphBuilder()
    for cid, triples in zip(chunk_ids, chunks):
        for s, r, t in triples:
            for name in (s, t):
                builder.ensure_entity(
                    f"{cid}::{name}", name, description=descriptions.get(name, ""), source_chunk=cid
                )
            builder.add_triple(Triple(f"{cid}::{s}", r, f"{cid}::{t}", source_chunk=cid))
    return builder.build()


def component_chunks(graph: KnowledgeGraph) -> list[frozenset[str | None]]:
    """For each connected component, the set of ``source_chunk`` values its entities carry."""
    return [
        frozenset(graph.entity(eid).source_chunk for eid in comp) for comp in connected_components(graph)
    ]
