"""Synthetic noisy graphs with planted duplicates and erroneous triples, plus pairwise metrics."""

from __future__ import annotations

import hashlib
import random
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .graph import Entity, KnowledgeGraph, Triple, TripleKey
from .matching import MatchGroup
from .reflection import BAD_MARKER

VARIANT_KINDS = ("casing", "whitespace", "abbreviation", "token_permutation")

_WORDS = (
    "adaptive amber atlas binary cobalt coral crimson delta echo ember falcon fractal granite harbor "
    "helix indigo ion jade kinetic lattice lumen magnet marble meridian nebula nimbus onyx orbit "
    "photon pixel prism quantum quartz radiant raven sable signal solar sonic spectral summit tandem "
    "terra tidal titan umber vector velvet vertex violet willow xenon zenith zephyr"
).split()
_TYPES = ("CONCEPT", "EVENT", "LOCATION", "ORGANIZATION", "PERSON", "TECHNOLOGY")
_RELATIONS = ("depends on", "located in", "part of", "produces", "related to", "uses", "works with")
_TOPICS = (
    "agriculture", "archives", "computing", "energy", "finance", "logistics", "medicine", "music",
    "oceanography", "robotics", "software", "transport",
)


@dataclass(frozen=True)
class NoiseSpec:
    """Generator settings. ``base_entities`` is the total entity count, planted clusters included."""

    base_entities: int = 100
    duplicate_clusters: int = 20
    cluster_size: tuple[int, int] = (2, 2)
    variant_kinds: tuple[str, ...] = VARIANT_KINDS
    triples_per_entity: float = 2.0
    erroneous_triple_fraction: float = 0.1
    seed: int = 0
    edge_copy_fraction: float = 0.5

    def __post_init__(self) -> None:
        lo, hi = self.cluster_size
        object.__setattr__(self, "cluster_size", (int(lo), int(hi)))
        object.__setattr__(self, "variant_kinds", tuple(self.variant_kinds))
        if self.base_entities < 1 or self.duplicate_clusters < 0:
            raise ValueError("base_entities must be >= 1 and duplicate_clusters >= 0")
        if lo < 2 or hi < lo:
            raise ValueError("cluster_size must satisfy 2 <= min <= max")
        for name in ("erroneous_triple_fraction", "edge_copy_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.triples_per_entity < 0:
            raise ValueError("triples_per_entity must be >= 0")
        unknown = set(self.variant_kinds) - set(VARIANT_KINDS)
        if unknown or not self.variant_kinds:
            raise ValueError(f"variant_kinds must be a non-empty subset of {VARIANT_KINDS}")
        if self.duplicate_clusters * hi > self.base_entities:
            raise ValueError(
                f"infeasible: {self.duplicate_clusters} clusters of up to {hi} entities "
                f"exceed {self.base_entities} entities"
            )

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> NoiseSpec:
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["cluster_size"] = list(self.cluster_size)
        d["variant_kinds"] = list(self.variant_kinds)
        return d


@dataclass
class GroundTruth:
    clusters: list[frozenset[str]] = field(default_factory=list)
    bad_triples: set[TripleKey] = field(default_factory=set)

    def to_dict(self) -> dict[str, Any]:
        return {
            "clusters": [sorted(c) for c in self.clusters],
            "bad_triples": [list(k) for k in sorted(self.bad_triples)],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> GroundTruth:
        return cls(
            [frozenset(c) for c in d.get("clusters", [])],
            {tuple(k) for k in d.get("bad_triples", [])},  # type: ignore[misc]
        )


def make_variant(name: str, kind: str) -> str:
    tokens = name.split()
    if kind == "casing":
        return name.lower()
    if kind == "whitespace":
        return "  ".join(tokens)
    if kind == "abbreviation":
        return "".join(t[0].upper() for t in tokens)
    if kind == "token_permutation":
        return " ".join(reversed(tokens))
    raise ValueError(f"unknown variant kind {kind!r}")


def _names(rng: random.Random, n: int) -> list[str]:
    seen: set[str] = set()
    out = []
    while len(out) < n:
        name = " ".join(w.capitalize() for w in rng.sample(_WORDS, 3))
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def generate_noisy_kg(spec: NoiseSpec) -> tuple[KnowledgeGraph, GroundTruth]:
    rng = random.Random(spec.seed)
    lo, hi = spec.cluster_size
    sizes = [rng.randint(lo, hi) for _ in range(spec.duplicate_clusters)]
    n_concepts = spec.base_entities - sum(sizes) + len(sizes)
    names = _names(rng, n_concepts)

    entities: list[Entity] = []
    clusters: list[frozenset[str]] = []
    counter = 0

    def new_id() -> str:
        nonlocal counter
        counter += 1
        return f"e{counter:05d}"

    for c, name in enumerate(names):
        etype = rng.choice(_TYPES)
        topic = rng.choice(_TOPICS)
        desc = f"{name} is a {etype.lower()} in {topic}, catalogue entry {c:05d}."
        members = [Entity(new_id(), name, etype, desc)]
        if c < len(sizes):
            for _ in range(sizes[c] - 1):
                variant = make_variant(name, rng.choice(spec.variant_kinds))
                members.append(Entity(new_id(), variant, etype, desc))
            clusters.append(frozenset(e.id for e in members))
        entities.extend(members)

    ids = [e.id for e in entities]
    by_id = {e.id: e for e in entities}
    keys: set[TripleKey] = set()
    triples: list[Triple] = []

    def add(s: str, r: str, t: str) -> bool:
        if s == t or (s, r, t) in keys:
            return False
        keys.add((s, r, t))
        triples.append(Triple(s, r, t, f"{by_id[s].name} {r} {by_id[t].name}."))
        return True

    target = round(spec.triples_per_entity * len(ids))
    if len(ids) > 1:
        tries = 0
        while len(triples) < target and tries < 50 * max(target, 1):
            tries += 1
            s, t = rng.sample(ids, 2)
            add(s, rng.choice(_RELATIONS), t)

    # copy a share of each member's edges onto its siblings
    owner = {m: cl for cl in clusters for m in cl}
    for tr in list(triples):
        for end in ("source", "target"):
            eid = getattr(tr, end)
            for sib in sorted(owner.get(eid, ())):
                if sib != eid and rng.random() < spec.edge_copy_fraction:
                    s, t = (sib, tr.target) if end == "source" else (tr.source, sib)
                    add(s, tr.relation, t)

    n_bad = round(spec.erroneous_triple_fraction * len(triples))
    bad_idx = set(rng.sample(range(len(triples)), n_bad))
    bad: set[TripleKey] = set()
    for i in sorted(bad_idx):
        t = triples[i]
        triples[i] = Triple(t.source, f"{t.relation} {BAD_MARKER}", t.target, t.description)
        bad.add(triples[i].key)

    return KnowledgeGraph(entities, triples), GroundTruth(clusters, bad)


def two_cluster_graph(cluster_size: int = 4, relation: str = "linked_to") -> KnowledgeGraph:
    """Two disjoint cliques of ``cluster_size`` entities joined internally by one relation."""
    entities, triples = [], []
    for c in range(2):
        members = [f"c{c}_{i}" for i in range(cluster_size)]
        entities += [Entity(m, m, f"GROUP{c}") for m in members]
        triples += [Triple(a, relation, b) for a in members for b in members if a != b]
    return KnowledgeGraph(entities, triples)


# --------------------------------------------------------------------------
# deterministic mock text embedder
# --------------------------------------------------------------------------


def description_key(text: str) -> str:
    """Embedding key for ``"name: description"`` texts: the description, else the normalized name."""
    _, sep, desc = text.partition(": ")
    if sep and desc.strip():
        return " ".join(desc.split())
    return " ".join(text.lower().split())


class HashEmbedder:
    """Maps each text to a seeded Gaussian vector; texts with equal keys get equal vectors."""

    def __init__(self, dimension: int = 32, key=description_key):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.key = key
        self.calls = 0

    def vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(self.key(text).encode("utf-8")).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "big")).standard_normal(self.dimension)

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed_texts needs at least one text")
        self.calls += 1
        return [self.vector(t).tolist() for t in texts]


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def _prf(tp: int, fp: int, fn: int) -> Metrics:
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return Metrics(p, r, f)


def _labels(groups: Iterable[Iterable[str]], universe: set[str], what: str) -> dict[str, int]:
    label: dict[str, int] = {}
    for i, g in enumerate(groups):
        for m in g:
            if m in label:
                raise ValueError(f"{what} groups overlap on {m!r}")
            if m not in universe:
                raise ValueError(f"{what} member {m!r} is outside the universe")
            label[m] = i
    return label


def resolution_metrics(
    predicted: Sequence[MatchGroup] | Sequence[Iterable[str]], truth: GroundTruth, universe: Iterable[str]
) -> Metrics:
    """Pairwise precision/recall/F1 over all unordered pairs of ``universe``."""
    universe = set(universe)
    pred = [g.members if isinstance(g, MatchGroup) else set(g) for g in predicted]
    lp = _labels(pred, universe, "predicted")
    lt = _labels(truth.clusters, universe, "truth")
    both: dict[tuple[int, int], int] = {}
    for m in lp.keys() & lt.keys():
        both[(lp[m], lt[m])] = both.get((lp[m], lt[m]), 0) + 1
    tp = sum(comb(c, 2) for c in both.values())
    pred_pos = sum(comb(len(g), 2) for g in pred)
    true_pos = sum(comb(len(g), 2) for g in truth.clusters)
    return _prf(tp, pred_pos - tp, true_pos - tp)


def pairwise_positives(groups: Iterable[Iterable[str]]) -> set[tuple[str, str]]:
    return {p for g in groups for p in combinations(sorted(g), 2)}


def reflection_metrics(
    removed: Iterable[TripleKey], truth: GroundTruth, all_triples: Iterable[TripleKey]
) -> Metrics:
    removed, every = set(removed), set(all_triples)
    if not removed <= every:
        raise ValueError(f"{len(removed - every)} removed triple(s) are not in the graph")
    bad = truth.bad_triples & every
    tp = len(removed & bad)
    return _prf(tp, len(removed) - tp, len(bad) - tp)
