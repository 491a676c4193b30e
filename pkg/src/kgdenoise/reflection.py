"""Triple reflection: judge each triple's reliability and drop those scored below a threshold."""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Mapping, Protocol, Sequence

from .graph import Entity, KnowledgeGraph, Triple, TripleKey
from .graphio import write_reflection_log
from .llm import ChatMessage, ServiceClient
from .merging import DEFAULT_SYNONYM_LABEL
from .prompts import JUDGE_SYSTEM_PROMPT, judge_user_prompt

logger = logging.getLogger(__name__)

BAD_MARKER = "⟦bad⟧"
DEFAULT_THRESHOLD = 0.2


@dataclass(frozen=True)
class ReflectionVerdict:
    source: str
    relation: str
    target: str
    score: float
    analysis: str = ""
    warning: str | None = None

    @property
    def key(self) -> TripleKey:
        return (self.source, self.relation, self.target)


@dataclass
class JudgeConfig:
    threshold: float = DEFAULT_THRESHOLD
    max_retries: int = 3
    backend: str = "mock"
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError("max_retries must be >= 0 and max_in_flight >= 1")
        if self.backend not in ("llm", "mock"):
            raise ValueError(f"unknown judge backend {self.backend!r}")


class JudgeError(RuntimeError):
    def __init__(self, message: str, raw_reply: str | None = None):
        super().__init__(message)
        self.raw_reply = raw_reply


class MissingVerdictError(LookupError):
    pass


class ReflectionError(RuntimeError):
    def __init__(self, failures: Sequence[tuple[TripleKey, Exception]]):
        self.failures = list(failures)
        lines = [f"{k}: {exc}" for k, exc in self.failures[:5]]
        more = f" (+{len(self.failures) - 5} more)" if len(self.failures) > 5 else ""
        super().__init__(f"{len(self.failures)} triple(s) could not be judged: " + "; ".join(lines) + more)


class Judge(Protocol):
    def judge(self, triple: Triple, source: Entity, target: Entity) -> ReflectionVerdict: ...


def clamp_score(score: float) -> tuple[float, str | None]:
    if score < 0.0 or score > 1.0:
        clamped = min(1.0, max(0.0, score))
        return clamped, f"score {score} outside [0, 1], clamped to {clamped}"
    return score, None


class MockJudge:
    """Deterministic offline judge: ``bad_score`` when the relation label or description carries ``marker``.

    ``overrides`` pins exact scores for specific triple keys.
    """

    def __init__(
        self,
        marker: str = BAD_MARKER,
        bad_score: float = 0.1,
        good_score: float = 1.0,
        overrides: Mapping[TripleKey, float] | None = None,
    ):
        self.marker = marker
        self.bad_score = bad_score
        self.good_score = good_score
        self.overrides = dict(overrides or {})

    def judge(self, triple: Triple, source: Entity, target: Entity) -> ReflectionVerdict:
        if triple.key in self.overrides:
            score, analysis = self.overrides[triple.key], "pinned score"
        elif self.marker in triple.relation or self.marker in triple.description:
            score, analysis = self.bad_score, "marked as erroneous"
        else:
            score, analysis = self.good_score, "no error marker"
        score, warning = clamp_score(float(score))
        return ReflectionVerdict(*triple.key, score, analysis, warning)


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_judge_reply(text: str) -> tuple[float, str]:
    """Extract ``(score, analysis)`` from a judge reply; raises ValueError when malformed."""
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1)
    decoder = json.JSONDecoder()
    obj = None
    for m in re.finditer(r"\{", text):
        try:
            candidate, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(candidate, dict) and "score" in candidate:
            obj = candidate
            break
    if obj is None:
        raise ValueError("no JSON object with a 'score' field in reply")
    raw = obj["score"]
    if isinstance(raw, bool):
        raise ValueError("score must be a number")
    score = float(raw)
    if not math.isfinite(score):
        raise ValueError("score must be finite")
    analysis = obj.get("analysis", "")
    return score, analysis if isinstance(analysis, str) else json.dumps(analysis)


class LLMJudge:
    """Chat-model judge using the triple-evaluation system and user prompts."""

    def __init__(self, client: ServiceClient, max_retries: int = 3):
        self.client = client
        self.max_retries = max_retries

    @staticmethod
    def messages(triple: Triple, source: Entity, target: Entity) -> list[ChatMessage]:
        relationship = triple.description or triple.relation
        return [
            ChatMessage("system", JUDGE_SYSTEM_PROMPT),
            ChatMessage("user", judge_user_prompt(source.name, target.name, relationship)),
        ]

    def judge(self, triple: Triple, source: Entity, target: Entity) -> ReflectionVerdict:
        messages = self.messages(triple, source, target)
        reply = ""
        for attempt in range(self.max_retries + 1):
            reply = self.client.chat_complete(messages)
            try:
                score, analysis = parse_judge_reply(reply)
            except ValueError as exc:
                logger.info("malformed judge reply for %s (attempt %d): %s", triple.key, attempt + 1, exc)
                continue
            score, warning = clamp_score(score)
            if warning:
                logger.warning("%s: %s", triple.key, warning)
            return ReflectionVerdict(*triple.key, score, analysis, warning)
        raise JudgeError(f"no parseable judge reply after {self.max_retries + 1} attempt(s)", reply)


def judge_triple(judge: Judge, triple: Triple, source: Entity, target: Entity) -> ReflectionVerdict:
    return judge.judge(triple, source, target)


def filter_triples(
    graph: KnowledgeGraph,
    verdicts: Mapping[TripleKey, float],
    threshold: float = DEFAULT_THRESHOLD,
    synonym_label: str = DEFAULT_SYNONYM_LABEL,
) -> tuple[KnowledgeGraph, list[Triple]]:
    """Keep triples scored >= ``threshold``; synonym links are always kept, entities never removed."""
    kept, removed = [], []
    for t in graph.triples:
        if t.relation == synonym_label:
            kept.append(t)
            continue
        try:
            score = verdicts[t.key]
        except KeyError:
            raise MissingVerdictError(f"no verdict for triple {t.key}") from None
        (kept if score >= threshold else removed).append(t)
    return graph.with_triples(kept), removed


@dataclass
class ReflectionResult:
    graph: KnowledgeGraph
    verdicts: list[ReflectionVerdict]
    removed: list[Triple] = field(default_factory=list)

    @property
    def scores(self) -> dict[TripleKey, float]:
        return {v.key: v.score for v in self.verdicts}


def reflect_graph(
    graph: KnowledgeGraph,
    judge: Judge,
    config: JudgeConfig | None = None,
    log_stream: IO[bytes] | IO[str] | None = None,
    synonym_label: str = DEFAULT_SYNONYM_LABEL,
) -> ReflectionResult:
    """Judge every non-synonym triple once per distinct key, write the JSONL log, then filter."""
    config = config or JudgeConfig()
    todo: dict[TripleKey, Triple] = {}
    for t in graph.triples:
        if t.relation != synonym_label:
            todo.setdefault(t.key, t)
    triples = list(todo.values())

    def run(t: Triple):
        try:
            return judge.judge(t, graph.entity(t.source), graph.entity(t.target))
        except Exception as exc:  # collected and reported together
            return exc

    if config.max_in_flight > 1 and len(triples) > 1:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            outcomes = list(pool.map(run, triples))
    else:
        outcomes = [run(t) for t in triples]

    failures = [(t.key, o) for t, o in zip(triples, outcomes) if isinstance(o, Exception)]
    if failures:
        raise ReflectionError(failures)
    verdicts: list[ReflectionVerdict] = outcomes  # type: ignore[assignment]
    if log_stream is not None:
        write_reflection_log(verdicts, log_stream)
    filtered, removed = filter_triples(graph, {v.key: v.score for v in verdicts}, config.threshold, synonym_label)
    return ReflectionResult(filtered, verdicts, removed)
