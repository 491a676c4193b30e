"""Rewrite a graph from match groups: direct merging, synonym linking, or both."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .graph import Entity, KnowledgeGraph, Triple, TripleKey, validate, whitespace_tokens
from .matching import MatchGroup

logger = logging.getLogger(__name__)

MERGE_STRATEGIES = ("direct_merge", "synonym_link", "merge_with_link")
SEPARATOR = "<SEP>"
DEFAULT_SYNONYM_LABEL = "synonym_of"
DEFAULT_TOKEN_BUDGET = 4000

# (descriptions, entity or relation name) -> summary
Summarizer = Callable[[Sequence[str], str], str]


class MergeError(ValueError):
    pass


@dataclass
class MergePlan:
    groups: list[MatchGroup]
    strategy: str = "direct_merge"
    synonym_label: str = DEFAULT_SYNONYM_LABEL
    token_budget: int = DEFAULT_TOKEN_BUDGET

    def __post_init__(self) -> None:
        if self.strategy not in MERGE_STRATEGIES:
            raise MergeError(f"unknown merge strategy {self.strategy!r}")
        if not self.synonym_label:
            raise MergeError("synonym_label must be non-empty")
        if self.token_budget < 1:
            raise MergeError("token_budget must be positive")
        owner: dict[str, str] = {}
        for g in self.groups:
            if g.canonical not in g.members:
                raise MergeError(f"canonical {g.canonical!r} is not in its group")
            for m in g.members:
                if m in owner:
                    raise MergeError(f"entity {m!r} appears in more than one group")
                owner[m] = g.canonical


@dataclass
class MergeReport:
    """Counters filled in by the merge functions."""

    summarized: int = 0
    truncated: int = 0
    summarizer_failures: int = 0
    entities_removed: int = 0
    self_loops_dropped: int = 0
    duplicates_collapsed: int = 0
    synonym_triples_added: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "summarized": self.summarized,
            "truncated": self.truncated,
            "summarizer_failures": self.summarizer_failures,
            "entities_removed": self.entities_removed,
            "self_loops_dropped": self.self_loops_dropped,
            "duplicates_collapsed": self.duplicates_collapsed,
            "synonym_triples_added": self.synonym_triples_added,
        }


@dataclass(frozen=True)
class Aggregate:
    text: str
    # "verbatim" (under budget), "summarizer", or "truncate"
    method: str = "verbatim"
    failed: bool = False

    @property
    def over_budget(self) -> bool:
        return self.method != "verbatim"


def truncate_tokens(text: str, budget: int) -> str:
    return " ".join(text.split()[:budget])


def aggregate_description(
    texts: Sequence[str],
    summarizer: Summarizer | None = None,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    name: str = "",
) -> Aggregate:
    """Join unique non-empty texts with ``<SEP>``; summarize when over ``token_budget``.

    Without a summarizer, or when it raises, the joined text is head-truncated
    to exactly ``token_budget`` whitespace tokens.
    """
    if not texts:
        raise ValueError("nothing to aggregate")
    unique = list(dict.fromkeys(t for t in texts if t and t.strip()))
    joined = SEPARATOR.join(unique)
    if whitespace_tokens(joined) <= token_budget:
        return Aggregate(joined)
    if summarizer is None:
        return Aggregate(truncate_tokens(joined, token_budget), "truncate")
    try:
        return Aggregate(summarizer(unique, name), "summarizer")
    except Exception as exc:  # summarizer is an external service
        logger.warning("summarizer failed for %r, truncating instead: %s", name, exc)
        return Aggregate(truncate_tokens(joined, token_budget), "truncate", failed=True)


def _record(report: MergeReport | None, agg: Aggregate, name: str) -> None:
    if report is None or not agg.over_budget:
        return
    report.summarized += 1
    if agg.method == "truncate":
        report.truncated += 1
    if agg.failed:
        report.summarizer_failures += 1
        report.warnings.append(f"summarizer failed for {name!r}; description truncated")


def _active_groups(graph: KnowledgeGraph, plan: MergePlan) -> list[MatchGroup]:
    """Groups restricted to members present in ``graph``, keeping those with >= 2 members.

    Members already absent (merged by an earlier application) are ignored, so
    re-applying a plan is a no-op.
    """
    active = []
    for g in plan.groups:
        if g.canonical not in graph:
            raise MergeError(f"canonical {g.canonical!r} is not in the graph")
        present = frozenset(m for m in g.members if m in graph)
        if len(present) > 1:
            active.append(MatchGroup(present, g.canonical))
    return active


def _consolidate(
    graph: KnowledgeGraph,
    plan: MergePlan,
    groups: list[MatchGroup],
    keep_members: bool,
    summarizer: Summarizer | None,
    relation_summarizer: Summarizer | None,
    report: MergeReport | None,
) -> tuple[list[Entity], list[Triple]]:
    phi = {m: g.canonical for g in groups for m in g.members}

    merged_desc: dict[str, str] = {}
    for g in groups:
        canon = graph.entity(g.canonical)
        ordered = [g.canonical, *g.others]
        agg = aggregate_description(
            [graph.entity(m).description for m in ordered], summarizer, plan.token_budget, canon.name
        )
        _record(report, agg, canon.name)
        merged_desc[g.canonical] = agg.text

    entities = []
    for e in graph.entities:
        if phi.get(e.id, e.id) != e.id:
            if keep_members:
                entities.append(e)
            elif report is not None:
                report.entities_removed += 1
            continue
        entities.append(replace(e, description=merged_desc[e.id]) if e.id in merged_desc else e)

    triples: list[Triple] = []
    position: dict[TripleKey, int] = {}
    descs: dict[TripleKey, list[str]] = {}
    for t in graph.triples:
        s, o = phi.get(t.source, t.source), phi.get(t.target, t.target)
        if s == o:
            if report is not None:
                report.self_loops_dropped += 1
            continue
        key = (s, t.relation, o)
        if key in position:
            descs[key].append(t.description)
            if report is not None:
                report.duplicates_collapsed += 1
            continue
        position[key] = len(triples)
        descs[key] = [t.description]
        triples.append(replace(t, source=s, target=o))

    for key, texts in descs.items():
        if len(texts) > 1:
            name = f"{graph.entity(key[0]).name} {key[1]} {graph.entity(key[2]).name}"
            agg = aggregate_description(texts, relation_summarizer, plan.token_budget, name)
            _record(report, agg, name)
            i = position[key]
            triples[i] = replace(triples[i], description=agg.text)
    return entities, triples


def _synonym_triples(graph: KnowledgeGraph, plan: MergePlan, groups: list[MatchGroup]) -> list[Triple]:
    out = []
    for g in groups:
        canon = graph.entity(g.canonical)
        for m in g.others:
            e = graph.entity(m)
            out.append(Triple(m, plan.synonym_label, g.canonical, f"{e.name} is a synonym of {canon.name}"))
    return out


def _check(graph: KnowledgeGraph) -> KnowledgeGraph:
    violations = validate(graph)
    if violations:
        raise MergeError("merge produced an invalid graph: " + "; ".join(v.message for v in violations))
    return graph


def _require(plan: MergePlan, strategy: str) -> None:
    if plan.strategy != strategy:
        raise MergeError(f"plan strategy is {plan.strategy!r}, expected {strategy!r}")


def direct_merge(
    graph: KnowledgeGraph,
    plan: MergePlan,
    summarizer: Summarizer | None = None,
    relation_summarizer: Summarizer | None = None,
    report: MergeReport | None = None,
) -> KnowledgeGraph:
    """Collapse each group into its canonical entity.

    Triple endpoints are rewritten to canonicals, triples whose endpoints
    coincide after rewriting are dropped, and parallel triples are collapsed
    into the first occurrence.
    """
    _require(plan, "direct_merge")
    groups = _active_groups(graph, plan)
    if not groups:
        return graph
    entities, triples = _consolidate(graph, plan, groups, False, summarizer, relation_summarizer, report)
    return _check(KnowledgeGraph(entities, triples))


def synonym_link(graph: KnowledgeGraph, plan: MergePlan, report: MergeReport | None = None) -> KnowledgeGraph:
    """Add ``(member, synonym_label, canonical)`` for every non-canonical member; change nothing else."""
    _require(plan, "synonym_link")
    groups = _active_groups(graph, plan)
    if not groups:
        return graph
    added = _synonym_triples(graph, plan, groups)
    if report is not None:
        report.synonym_triples_added += len(added)
    return _check(KnowledgeGraph(graph.entities, [*graph.triples, *added]))


def merge_with_link(
    graph: KnowledgeGraph,
    plan: MergePlan,
    summarizer: Summarizer | None = None,
    relation_summarizer: Summarizer | None = None,
    report: MergeReport | None = None,
) -> KnowledgeGraph:
    """Consolidate descriptions and relations onto canonicals, keep every entity, then add synonym links."""
    _require(plan, "merge_with_link")
    groups = _active_groups(graph, plan)
    if not groups:
        return graph
    entities, triples = _consolidate(graph, plan, groups, True, summarizer, relation_summarizer, report)
    added = _synonym_triples(graph, plan, groups)
    if report is not None:
        report.synonym_triples_added += len(added)
    return _check(KnowledgeGraph(entities, [*triples, *added]))


def apply_merge_plan(
    graph: KnowledgeGraph,
    plan: MergePlan,
    summarizer: Summarizer | None = None,
    relation_summarizer: Summarizer | None = None,
    report: MergeReport | None = None,
) -> KnowledgeGraph:
    if plan.strategy == "direct_merge":
        return direct_merge(graph, plan, summarizer, relation_summarizer, report)
    if plan.strategy == "synonym_link":
        return synonym_link(graph, plan, report)
    return merge_with_link(graph, plan, summarizer, relation_summarizer, report)
