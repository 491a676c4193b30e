from __future__ import annotations

from collections import defaultdict

import numpy as np
import pytest
from hypothesis import strategies as st

from kgdenoise.embeddings import EmbeddingTable
from kgdenoise.graph import Entity, KnowledgeGraph, Triple

TYPES = ["PERSON", "ORG", "CONCEPT"]
RELATIONS = ["uses", "part of", "knows"]
text = st.text(alphabet="abcXYZ 019é中⟦⟧\n\t\"\\<>", max_size=12)


@st.composite
def graphs(draw, min_entities: int = 0, max_entities: int = 12, max_triples: int = 24, unicode: bool = True):
    """Valid random graphs; ids are e0..e{n-1}."""
    n = draw(st.integers(min_entities, max_entities))
    ids = [f"e{i}" for i in range(n)]
    label = text if unicode else st.sampled_from(["alpha", "beta", "gamma"])
    entities = [
        Entity(
            i,
            draw(label.filter(lambda s: s.strip() != "")) if unicode else draw(label),
            draw(st.none() | st.sampled_from(TYPES)),
            draw(text) if unicode else "",
            draw(st.none() | st.sampled_from(["c0", "c1"])),
        )
        for i in ids
    ]
    triples = []
    if n:
        m = draw(st.integers(0, max_triples))
        for _ in range(m):
            s, t = draw(st.sampled_from(ids)), draw(st.sampled_from(ids))
            r = draw(st.sampled_from(RELATIONS))
            triples.append(Triple(s, r, t, draw(text) if unicode else ""))
    return KnowledgeGraph(entities, triples)


def random_table(graph: KnowledgeGraph, dim: int = 8, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    return EmbeddingTable(dim, {e: rng.standard_normal(dim) for e in graph.entity_ids})


@pytest.fixture
def triangle() -> KnowledgeGraph:
    ents = [
        Entity("a", "Alpha", "PERSON", "first letter"),
        Entity("b", "Beta", "ORG", "second letter of the alphabet"),
        Entity("c", "Gamma", None, ""),
    ]
    return KnowledgeGraph(ents, [Triple("a", "knows", "b", "a knows b"), Triple("c", "uses", "a", "c uses a")])


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion
# --------------------------------------------------------------------------

_criteria: dict[int, list[bool]] = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _criteria[int(marker.args[0])].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status} ({sum(results)}/{len(results)} checks)")
