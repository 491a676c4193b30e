import io
import json

import pytest
from hypothesis import given

from kgdenoise.blocking import Block
from kgdenoise.graph import Entity, GraphStats, KnowledgeGraph, Triple
from kgdenoise.graphio import (
    FORMAT_VERSION,
    GraphFormatError,
    GraphIntegrityError,
    ReductionReport,
    dumps_graph,
    load_graph,
    read_blocks,
    read_graph,
    read_groups,
    read_reflection_log,
    read_scored_pairs,
    reduction_pct,
    save_graph,
    write_blocks,
    write_graph,
    write_groups,
    write_reduction_report,
    write_reflection_log,
    write_scored_pairs,
)
from kgdenoise.matching import MatchGroup, ScoredPair
from kgdenoise.reflection import ReflectionVerdict

from .conftest import graphs


def roundtrip(g):
    buf = io.BytesIO()
    save_graph(g, buf)
    buf.seek(0)
    return load_graph(buf)


def test_json_example():
    doc = {
        "format_version": "1.0",
        "entities": [{"id": "a", "name": "A"}, {"id": "b", "name": "B", "type": "ORG", "description": "d"}],
        "triples": [{"source": "a", "relation": "r", "target": "b"}],
    }
    g = load_graph(io.BytesIO(json.dumps(doc).encode()))
    assert (len(g.entities), len(g.triples)) == (2, 1)
    assert g.entity("b").entity_type == "ORG"


def test_tsv_example():
    g = load_graph(io.BytesIO("LLMs\trun on\tGPU\n".encode()), format="tsv-triples")
    assert (len(g.entities), len(g.triples)) == (2, 1)
    assert all(e.description == "" for e in g.entities)
    assert g.triples[0].key == ("LLMs", "run on", "GPU")


def test_dangling_reference_names_id():
    doc = {"format_version": "1.0", "entities": [{"id": "a", "name": "A"}], "triples": [
        {"source": "a", "relation": "r", "target": "ghost"}]}
    with pytest.raises(GraphIntegrityError, match="ghost"):
        load_graph(io.StringIO(json.dumps(doc)))


def test_parse_errors_carry_position():
    with pytest.raises(GraphFormatError) as exc:
        load_graph(io.StringIO('{"format_version": "1.0",\n "entities": [}'))
    assert exc.value.line == 2
    with pytest.raises(GraphFormatError) as exc:
        load_graph(io.StringIO("a\tb\tc\nonly two\tfields\n"), format="tsv")
    assert exc.value.line == 2
    with pytest.raises(GraphFormatError, match="format_version"):
        load_graph(io.StringIO("{}"))
    with pytest.raises(GraphFormatError, match="name"):
        load_graph(io.StringIO('{"format_version": "1.0", "entities": [{"id": "a", "name": 3}]}'))


def test_save_is_sorted_and_deterministic():
    g = KnowledgeGraph([Entity("b", "B"), Entity("a", "A")], [Triple("b", "r", "a"), Triple("a", "r", "b")])
    text = dumps_graph(g)
    assert text == dumps_graph(KnowledgeGraph(reversed(g.entities), reversed(g.triples)))
    doc = json.loads(text)
    assert [e["id"] for e in doc["entities"]] == ["a", "b"]
    assert [t["source"] for t in doc["triples"]] == ["a", "b"]


def test_empty_graph_document():
    doc = json.loads(dumps_graph(KnowledgeGraph()))
    assert doc == {"format_version": FORMAT_VERSION, "entities": [], "triples": []}


def test_save_rejects_invalid_graph():
    with pytest.raises(GraphIntegrityError):
        save_graph(KnowledgeGraph([], [Triple("x", "r", "y")]), io.BytesIO())


def test_text_stream_and_paths(tmp_path, triangle):
    buf = io.StringIO()
    save_graph(triangle, buf)
    assert load_graph(io.StringIO(buf.getvalue())) == triangle
    write_graph(triangle, tmp_path / "g.json")
    assert read_graph(tmp_path / "g.json") == triangle
    (tmp_path / "g.tsv").write_text("a\tr\tb\n")
    assert len(read_graph(tmp_path / "g.tsv").entities) == 2


@given(graphs())
def test_roundtrip_property(g):
    assert roundtrip(g) == g
    assert dumps_graph(roundtrip(g)) == dumps_graph(g)


# reflection log


def test_reflection_log_format():
    v = ReflectionVerdict("a", "r", "b", 0.1, "line one\nline two")
    buf = io.BytesIO()
    write_reflection_log([v, ReflectionVerdict("b", "r", "c", 0.456, "")], buf)
    lines = buf.getvalue().decode().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert first == {"source": "a", "relation": "r", "target": "b", "score": 0.1, "analysis": "line one\nline two"}
    assert '"score": 0.1' in lines[0]
    assert json.loads(lines[1])["score"] == 0.46


def test_reflection_log_empty_and_read_back():
    buf = io.BytesIO()
    write_reflection_log([], buf)
    assert buf.getvalue() == b""
    text = '{"source": "a", "relation": "r", "target": "b", "score": "0.10", "analysis": "x"}\n'
    (v,) = read_reflection_log(io.StringIO(text))
    assert v.score == 0.1
    with pytest.raises(GraphFormatError) as exc:
        read_reflection_log(io.StringIO(text + "{broken\n"))
    assert exc.value.line == 2


# reduction report


def stats(entities, triples):
    return GraphStats(entity_count=entities, triple_count=triples)


def test_reduction_report_values():
    buf = io.StringIO()
    rep = write_reduction_report(stats(21131, 23102), stats(12679, 15548), {"merging": {"merges": 8452}}, buf)
    assert rep.entity_reduction_pct == 40.00
    assert rep.triple_reduction_pct == 32.70
    doc = json.loads(buf.getvalue())
    assert doc["entity_reduction_pct"] == 40.0 and doc["per_stage"]["merging"]["merges"] == 8452
    same = ReductionReport.from_counts(5, 5, 7, 7)
    assert (same.entity_reduction_pct, same.triple_reduction_pct) == (0.0, 0.0)
    assert reduction_pct(0, 0) == 0.0


def test_reduction_report_precondition():
    with pytest.raises(ValueError):
        write_reduction_report(stats(1, 1), stats(2, 1), None, io.StringIO())


def test_report_dict_roundtrip():
    rep = ReductionReport.from_counts(10, 6, 20, 15, {"s": {"n": 1}})
    assert ReductionReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep


# stage handoff files


def test_stage_files_roundtrip():
    blocks = [Block(0, frozenset({"a", "b"}), "type", "ORG"), Block(1, frozenset({"c"}), "semantic")]
    buf = io.BytesIO()
    write_blocks(blocks, buf)
    assert read_blocks(io.BytesIO(buf.getvalue())) == blocks

    pairs = [ScoredPair("a", "b", 0.25), ScoredPair("c", "b", -1.0)]
    buf = io.BytesIO()
    write_scored_pairs(pairs, buf)
    assert read_scored_pairs(io.BytesIO(buf.getvalue())) == pairs

    groups = [MatchGroup(frozenset({"a", "b"}), "b")]
    buf = io.StringIO()
    write_groups(groups, buf)
    assert read_groups(io.StringIO(buf.getvalue())) == groups


PUBLISHED_ENTITY_ROWS = [
    (21131, 12679), (42444, 25466), (21761, 13057), (21227, 12736),
    (16434, 9861), (25495, 15297), (15257, 9154), (15600, 9360),
    (16502, 9902), (34342, 20606), (16761, 10057), (16111, 9667),
]


@pytest.mark.parametrize("before,after", PUBLISHED_ENTITY_ROWS)
def test_forty_percent_rows(before, after):
    rep = ReductionReport.from_counts(before, after, 1, 1)
    assert rep.entity_reduction_pct == 40.00
    # the removed count is always within one entity of 0.4 n
    assert abs((before - after) - 0.4 * before) < 1
