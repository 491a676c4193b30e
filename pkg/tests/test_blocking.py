import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgdenoise.blocking import (
    Block,
    kmeans,
    kmeans_fit,
    make_blocks,
    semantic_blocks,
    semantic_k,
    structural_blocks,
    type_blocks,
)
from kgdenoise.embeddings import CoverageError, EmbeddingTable
from kgdenoise.graph import Entity, KnowledgeGraph, Triple
from kgdenoise.matching import candidate_pairs

from .conftest import graphs, random_table


def typed_graph(counts):
    ents = []
    for t, n in counts.items():
        ents += [Entity(f"{t}{i:03d}", f"{t} {i}", None if t == "none" else t) for i in range(n)]
    return KnowledgeGraph(ents)


def assert_partition(blocks, ids):
    members = [m for b in blocks for m in b.members]
    assert sorted(members) == sorted(ids)


# kmeans


def test_kmeans_k1():
    assert set(kmeans({"a": [0, 0], "b": [5, 5], "c": [9, 1]}, 1).values()) == {0}


def brute_force_best_split(X):
    best, best_labels = math.inf, None
    for bits in product([0, 1], repeat=len(X) - 1):
        labels = np.array((0, *bits))
        if labels.min() == labels.max():
            continue
        sse = sum(((X[labels == j] - X[labels == j].mean(0)) ** 2).sum() for j in (0, 1))
        if sse < best:
            best, best_labels = sse, labels
    return best_labels


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_two_clouds_match_oracle(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.uniform(-0.01, 0.01, (5, 2)), 10 + rng.uniform(-0.01, 0.01, (5, 2))])
    got = kmeans_fit(X, 2, seed).labels
    want = brute_force_best_split(X)
    # same partition up to label names
    assert len({(a, b) for a, b in zip(got, want)}) == 2


def test_kmeans_k_equals_distinct_points():
    vecs = {"a": [0, 0], "a2": [0, 0], "b": [1, 0], "c": [0, 3]}
    labels = kmeans(vecs, 3)
    assert labels["a"] == labels["a2"] and len(set(labels.values())) == 3
    res = kmeans_fit(np.array(list(vecs.values()), float), 3)
    assert res.sse == pytest.approx(0.0)


def test_kmeans_lowers_k_and_rejects_empty():
    assert len(set(kmeans({"a": [1, 1], "b": [1, 1]}, 5).values())) == 1
    with pytest.raises(ValueError):
        kmeans({}, 2)
    with pytest.raises(ValueError):
        kmeans({"a": [1]}, 0)


@settings(deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 6), st.integers(5, 40))
def test_kmeans_sse_monotone_and_deterministic(seed, k, n):
    X = np.random.default_rng(seed).standard_normal((n, 3))
    res = kmeans_fit(X, k, seed)
    assert all(b <= a + 1e-9 for a, b in zip(res.sse_history, res.sse_history[1:]))
    assert np.array_equal(res.labels, kmeans_fit(X, k, seed).labels)


# semantic


def test_semantic_k_examples():
    assert semantic_k(1000) == 10
    assert semantic_k(9) == 1
    assert semantic_k(40) == 2
    assert semantic_k(0) == 1
    # half-up: sqrt(n/10) = 1.5 at n = 22.5
    assert semantic_k(23) == 2 and semantic_k(22) == 1


def test_semantic_blocks_partition():
    g = typed_graph({"X": 40})
    blocks = semantic_blocks(g, random_table(g))
    assert len(blocks) == 2
    assert_partition(blocks, g.entity_ids)
    assert all(b.provenance == "semantic" for b in blocks)
    assert len(semantic_blocks(typed_graph({"X": 9}), random_table(typed_graph({"X": 9})))) == 1


def test_semantic_blocks_need_coverage():
    g = typed_graph({"X": 3})
    with pytest.raises(CoverageError):
        semantic_blocks(g, EmbeddingTable(2, {"X000": np.ones(2)}))


# type


def test_type_blocks_examples():
    blocks = type_blocks(typed_graph({"PERSON": 3, "ORG": 2}), max_block_size=10)
    assert sorted(len(b) for b in blocks) == [2, 3]
    assert {b.origin for b in blocks} == {"PERSON", "ORG"}
    g = typed_graph({"ORG": 25})
    blocks = type_blocks(g, random_table(g), max_block_size=10)
    assert len(blocks) == 3 and all(b.origin == "ORG" for b in blocks)
    assert_partition(blocks, g.entity_ids)
    blocks = type_blocks(typed_graph({"none": 4}))
    assert [(b.origin, len(b)) for b in blocks] == [("UNKNOWN", 4)]


def test_type_blocks_errors():
    g = typed_graph({"ORG": 5})
    with pytest.raises(ValueError):
        type_blocks(g, max_block_size=1)
    with pytest.raises(ValueError, match="embeddings"):
        type_blocks(g, None, max_block_size=2)


# structural


def g_of(*edges):
    ids = sorted({x for e in edges for x in e})
    return KnowledgeGraph([Entity(i, i) for i in ids], [Triple(a, "r", b) for a, b in edges])


def members(blocks):
    return sorted(sorted(b.members) for b in blocks)


def test_structural_examples():
    star = structural_blocks(g_of(("c", "l1"), ("c", "l2"), ("l3", "c")))
    assert members(star) == [["l1", "l2", "l3"]] and star[0].origin == "c"
    assert members(structural_blocks(g_of(("a", "b"), ("b", "c")))) == [["a", "c"]]
    tri = structural_blocks(g_of(("a", "b"), ("b", "c"), ("c", "a")))
    assert members(tri) == [["a", "b"], ["a", "c"], ["b", "c"]]


def test_structural_dedups_member_sets():
    # a and b both neighbor exactly {x, y}
    blocks = structural_blocks(g_of(("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")))
    assert members(blocks) == [["a", "b"], ["x", "y"]]


@given(graphs(unicode=False))
def test_structural_pivot_property(g):
    for b in structural_blocks(g):
        assert len(b) >= 2
        assert b.members == g.neighbors(b.origin)


@settings(deadline=None)
@given(graphs(min_entities=1, unicode=False), st.sampled_from(["semantic", "type"]))
def test_semantic_and_type_partition(g, strategy):
    blocks = make_blocks(g, strategy, random_table(g), max_block_size=3)
    assert_partition(blocks, g.entity_ids)
    n = len(g.entities)
    pairs = candidate_pairs(blocks)
    assert len(pairs) <= math.comb(n, 2)
    if len(blocks) >= 2:
        assert len(pairs) < math.comb(n, 2)


def test_make_blocks_errors(triangle):
    with pytest.raises(ValueError):
        make_blocks(triangle, "semantic")
    with pytest.raises(ValueError):
        make_blocks(triangle, "lsh")
    with pytest.raises(ValueError):
        Block(0, frozenset(), "type")
