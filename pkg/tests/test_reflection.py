import io
import json
import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgdenoise.graph import Entity, KnowledgeGraph, Triple
from kgdenoise.llm import ServiceClient, ServiceConfig
from kgdenoise.reflection import (
    BAD_MARKER,
    JudgeConfig,
    JudgeError,
    LLMJudge,
    MissingVerdictError,
    MockJudge,
    ReflectionError,
    clamp_score,
    filter_triples,
    parse_judge_reply,
    reflect_graph,
)

from .conftest import graphs


def small_graph():
    ents = [Entity(i, i.upper()) for i in "abcd"]
    triples = [
        Triple("a", "works_at", "b"),
        Triple("b", f"owns {BAD_MARKER}", "c"),
        Triple("c", "synonym_of", "d"),
        Triple("a", "knows", "d", f"odd {BAD_MARKER}"),
    ]
    return KnowledgeGraph(ents, triples)


def chat_client(replies):
    """Client whose chat endpoint returns ``replies`` in order, recording each call."""
    calls = []
    it = iter(replies)

    def transport(path, payload):
        calls.append(payload)
        return {"choices": [{"message": {"content": next(it)}}]}

    return ServiceClient(ServiceConfig(), transport, sleep=lambda s: None), calls


# mock judge


def test_mock_judge_marks_bad_triples():
    g = small_graph()
    res = reflect_graph(g, MockJudge(), JudgeConfig())
    assert res.scores == {("a", "works_at", "b"): 1.0, ("b", f"owns {BAD_MARKER}", "c"): 0.1, ("a", "knows", "d"): 0.1}
    assert {t.relation for t in res.graph.triples} == {"works_at", "synonym_of"}
    assert len(res.removed) == 2 and res.graph.entities == g.entities


def test_mock_overrides_and_clamp():
    t = Triple("a", "r", "b")
    v = MockJudge(overrides={t.key: 1.7}).judge(t, Entity("a", "A"), Entity("b", "B"))
    assert v.score == 1.0 and "clamped" in v.warning
    assert clamp_score(-0.5) == (0.0, "score -0.5 outside [0, 1], clamped to 0.0")
    assert clamp_score(0.3) == (0.3, None)


# threshold


def test_threshold_boundary_keeps_equal_scores():
    g = KnowledgeGraph([Entity("a", "A"), Entity("b", "B")], [Triple("a", "r", "b"), Triple("b", "r", "a")])
    out, removed = filter_triples(g, {("a", "r", "b"): 0.2, ("b", "r", "a"): 0.19})
    assert [t.key for t in out.triples] == [("a", "r", "b")]
    assert [t.key for t in removed] == [("b", "r", "a")]


def test_all_good_and_all_bad():
    g = small_graph()
    keep_all, _ = filter_triples(g, {t.key: 0.9 for t in g.triples})
    assert keep_all.triples == g.triples
    drop_all, _ = filter_triples(g, {t.key: 0.0 for t in g.triples})
    assert [t.relation for t in drop_all.triples] == ["synonym_of"]
    assert drop_all.entities == g.entities


def test_missing_verdict():
    with pytest.raises(MissingVerdictError):
        filter_triples(small_graph(), {})


def test_config_validation():
    with pytest.raises(ValueError):
        JudgeConfig(threshold=1.5)
    with pytest.raises(ValueError):
        JudgeConfig(backend="oracle")
    with pytest.raises(ValueError):
        JudgeConfig(max_in_flight=0)


def brute_force_filter(triples, scores, threshold):
    return [t for t in triples if t.relation == "synonym_of" or scores[t.key] >= threshold]


@st.composite
def scored_graphs(draw):
    g = draw(graphs(min_entities=1, unicode=False))
    scores = {t.key: draw(st.floats(0, 1)) for t in g.triples}
    return g, scores


@given(scored_graphs(), st.floats(0, 1))
def test_filter_matches_brute_force(case, threshold):
    g, scores = case
    out, removed = filter_triples(g, scores, threshold)
    assert list(out.triples) == brute_force_filter(g.triples, scores, threshold)
    assert len(out.triples) + len(removed) == len(g.triples)
    assert out.entities == g.entities


@given(scored_graphs(), st.floats(0, 1), st.floats(0, 1))
def test_higher_threshold_keeps_a_subset(case, t1, t2):
    g, scores = case
    lo, hi = sorted((t1, t2))
    kept_lo = set(filter_triples(g, scores, lo)[0].triples)
    kept_hi = set(filter_triples(g, scores, hi)[0].triples)
    assert kept_hi <= kept_lo


# reply parsing


def test_parse_plain_and_fenced():
    assert parse_judge_reply('{"score": 0.8, "analysis": "fine"}') == (0.8, "fine")
    fenced = 'Here you go:\n```json\n{"analysis": "weak", "score": 0.15}\n```\nthanks'
    assert parse_judge_reply(fenced) == (0.15, "weak")
    assert parse_judge_reply('I think {"score": 1} overall') == (1.0, "")


@pytest.mark.parametrize("reply", ["no json here", '{"analysis": "x"}', '{"score": true}', '{"score": "NaN"}', "{broken"])
def test_parse_rejects(reply):
    with pytest.raises(ValueError):
        parse_judge_reply(reply)


# LLM judge


def test_llm_judge_prompt_and_score():
    client, calls = chat_client(['{"score": 0.9, "analysis": "plausible"}'])
    t = Triple("a", "works_at", "b", "Ann works at Bee Corp")
    v = LLMJudge(client).judge(t, Entity("a", "Ann"), Entity("b", "Bee Corp"))
    assert (v.score, v.analysis) == (0.9, "plausible")
    (payload,) = calls
    system, user = payload["messages"]
    assert system["role"] == "system" and user["role"] == "user"
    assert "Ann" in user["content"] and "Bee Corp" in user["content"] and "Ann works at Bee Corp" in user["content"]


def test_llm_judge_falls_back_to_relation_label():
    msgs = LLMJudge.messages(Triple("a", "works_at", "b"), Entity("a", "Ann"), Entity("b", "Bee"))
    assert "works_at" in msgs[1].content


def test_llm_judge_retries_then_succeeds():
    client, calls = chat_client(["garbage", "still garbage", '{"score": 0.4}'])
    v = LLMJudge(client, max_retries=3).judge(Triple("a", "r", "b"), Entity("a", "A"), Entity("b", "B"))
    assert v.score == 0.4 and len(calls) == 3


def test_llm_judge_gives_up_with_raw_reply():
    client, calls = chat_client(["nope"] * 4)
    with pytest.raises(JudgeError) as exc:
        LLMJudge(client, max_retries=3).judge(Triple("a", "r", "b"), Entity("a", "A"), Entity("b", "B"))
    assert exc.value.raw_reply == "nope" and len(calls) == 4


def test_llm_judge_clamps_with_warning():
    client, _ = chat_client(['{"score": 3}'])
    v = LLMJudge(client).judge(Triple("a", "r", "b"), Entity("a", "A"), Entity("b", "B"))
    assert v.score == 1.0 and v.warning


# reflect_graph


def test_log_has_one_line_per_judged_triple():
    buf = io.BytesIO()
    res = reflect_graph(small_graph(), MockJudge(), log_stream=buf)
    lines = buf.getvalue().decode().splitlines()
    assert len(lines) == len(res.verdicts) == 3
    assert all(set(json.loads(x)) == {"source", "relation", "target", "score", "analysis"} for x in lines)


def test_parallel_triples_judged_once():
    g = KnowledgeGraph([Entity("a", "A"), Entity("b", "B")], [Triple("a", "r", "b", "one"), Triple("a", "r", "b", "two")])
    seen = []

    class Counting(MockJudge):
        def judge(self, triple, source, target):
            seen.append(triple.key)
            return super().judge(triple, source, target)

    res = reflect_graph(g, Counting())
    assert seen == [("a", "r", "b")] and len(res.graph.triples) == 2


def test_failures_are_aggregated():
    class Flaky:
        def judge(self, triple, source, target):
            if triple.relation == "works_at":
                return MockJudge().judge(triple, source, target)
            raise JudgeError("bad reply", "raw")

    with pytest.raises(ReflectionError) as exc:
        reflect_graph(small_graph(), Flaky())
    assert len(exc.value.failures) == 2
    assert all(isinstance(e, JudgeError) for _, e in exc.value.failures)


def test_in_flight_bound():
    active, peak, lock = [0], [0], threading.Lock()

    class Slow(MockJudge):
        def judge(self, triple, source, target):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.01)
            with lock:
                active[0] -= 1
            return super().judge(triple, source, target)

    ents = [Entity(f"e{i}", f"E{i}") for i in range(20)]
    g = KnowledgeGraph(ents, [Triple(f"e{i}", "r", f"e{i + 1}") for i in range(19)])
    reflect_graph(g, Slow(), JudgeConfig(max_in_flight=3))
    assert 1 <= peak[0] <= 3


@given(graphs(unicode=False))
def test_reflection_never_touches_entities(g):
    res = reflect_graph(g, MockJudge(marker="X"), JudgeConfig(max_in_flight=1))
    assert res.graph.entities == g.entities
    assert set(res.graph.triples) <= set(g.triples)
