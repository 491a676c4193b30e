"""Serialization for graphs, reflection logs, reduction reports and stage handoff files.

All writers are deterministic: graphs are written with entities sorted by id
and triples sorted by ``(source, relation, target)``, with a fixed field order.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any, Iterable, Mapping, Sequence

from .graph import Entity, GraphStats, KnowledgeGraph, Triple, validate

if TYPE_CHECKING:
    from .blocking import Block
    from .matching import MatchGroup, ScoredPair
    from .reflection import ReflectionVerdict

FORMAT_VERSION = "1.0"


class GraphFormatError(ValueError):
    """Input could not be parsed; carries the 1-based line and column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")" if line else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class GraphIntegrityError(ValueError):
    """Parsed graph violates referential or uniqueness invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


def _read_text(stream: IO[bytes] | IO[str]) -> str:
    data = stream.read()
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GraphFormatError(f"input is not valid UTF-8 at byte {exc.start}") from exc
    return data


def _write_text(stream: IO[bytes] | IO[str], text: str) -> None:
    if isinstance(stream, io.TextIOBase):
        stream.write(text)
    else:
        stream.write(text.encode("utf-8"))


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------


def entity_record(e: Entity) -> dict[str, Any]:
    return {
        "id": e.id,
        "name": e.name,
        "type": e.entity_type,
        "description": e.description,
        "source_chunk": e.source_chunk,
    }


def triple_record(t: Triple) -> dict[str, Any]:
    return {
        "source": t.source,
        "relation": t.relation,
        "target": t.target,
        "description": t.description,
        "source_chunk": t.source_chunk,
    }


def graph_to_document(graph: KnowledgeGraph) -> dict[str, Any]:
    entities, triples = graph.canonical_form()
    return {
        "format_version": FORMAT_VERSION,
        "entities": [entity_record(e) for e in entities],
        "triples": [triple_record(t) for t in triples],
    }


def _require_str(record: Mapping, key: str, where: str, optional: bool = False) -> str | None:
    value = record.get(key)
    if value is None and optional:
        return None
    if not isinstance(value, str):
        raise GraphFormatError(f"{where}: field {key!r} must be a string, got {value!r}")
    return value


def graph_from_document(doc: Any) -> KnowledgeGraph:
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    if "format_version" not in doc:
        raise GraphFormatError("graph document lacks 'format_version'")
    entities = []
    for i, rec in enumerate(doc.get("entities", [])):
        where = f"entities[{i}]"
        if not isinstance(rec, dict):
            raise GraphFormatError(f"{where}: expected an object")
        entities.append(
            Entity(
                id=_require_str(rec, "id", where),
                name=_require_str(rec, "name", where),
                entity_type=_require_str(rec, "type", where, optional=True),
                description=_require_str(rec, "description", where, optional=True) or "",
                source_chunk=_require_str(rec, "source_chunk", where, optional=True),
            )
        )
    triples = []
    for i, rec in enumerate(doc.get("triples", [])):
        where = f"triples[{i}]"
        if not isinstance(rec, dict):
            raise GraphFormatError(f"{where}: expected an object")
        triples.append(
            Triple(
                source=_require_str(rec, "source", where),
                relation=_require_str(rec, "relation", where),
                target=_require_str(rec, "target", where),
                description=_require_str(rec, "description", where, optional=True) or "",
                source_chunk=_require_str(rec, "source_chunk", where, optional=True),
            )
        )
    return KnowledgeGraph(entities, triples)


def _parse_tsv(text: str) -> KnowledgeGraph:
    entities: dict[str, Entity] = {}
    triples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise GraphFormatError("expected 'source<TAB>relation<TAB>target'", line=lineno)
        s, r, t = (p.strip() for p in parts)
        for name in (s, t):
            entities.setdefault(name, Entity(name, name))
        triples.append(Triple(s, r, t))
    return KnowledgeGraph(entities.values(), triples)


def load_graph(stream: IO[bytes] | IO[str], format: str = "json") -> KnowledgeGraph:
    """Parse a graph from ``stream``.

    ``format="json"`` reads the graph document schema; ``format="tsv"`` reads one
    ``source<TAB>relation<TAB>target`` triple per line and synthesizes
    description-free entities whose id equals their name.
    """
    text = _read_text(stream)
    if format == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(exc.msg, line=exc.lineno, column=exc.colno) from exc
        graph = graph_from_document(doc)
    elif format in ("tsv", "tsv-triples"):
        graph = _parse_tsv(text)
    else:
        raise ValueError(f"unsupported graph format {format!r}")
    violations = validate(graph)
    if violations:
        raise GraphIntegrityError(violations)
    return graph


def dumps_graph(graph: KnowledgeGraph) -> str:
    return json.dumps(graph_to_document(graph), ensure_ascii=False, indent=2) + "\n"


def save_graph(graph: KnowledgeGraph, stream: IO[bytes] | IO[str], format: str = "json") -> None:
    if format != "json":
        raise ValueError(f"unsupported graph format {format!r}")
    violations = validate(graph)
    if violations:
        raise GraphIntegrityError(violations)
    _write_text(stream, dumps_graph(graph))


def read_graph(path: str | Path, format: str | None = None) -> KnowledgeGraph:
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() in (".tsv", ".txt") else "json"
    with path.open("rb") as fh:
        return load_graph(fh, format)


def write_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        save_graph(graph, fh)


# --------------------------------------------------------------------------
# reflection log (JSONL)
# --------------------------------------------------------------------------


def verdict_record(v: ReflectionVerdict) -> dict[str, Any]:
    return {
        "source": v.source,
        "relation": v.relation,
        "target": v.target,
        "score": round(float(v.score), 2),
        "analysis": v.analysis,
    }


def write_reflection_log(verdicts: Iterable[ReflectionVerdict], stream: IO[bytes] | IO[str]) -> None:
    lines = [json.dumps(verdict_record(v), ensure_ascii=False) + "\n" for v in verdicts]
    _write_text(stream, "".join(lines))


def read_reflection_log(stream: IO[bytes] | IO[str]) -> list[ReflectionVerdict]:
    from .reflection import ReflectionVerdict

    out = []
    for lineno, line in enumerate(_read_text(stream).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            score = float(rec["score"])  # accepts "0.10" as well as 0.1
            out.append(
                ReflectionVerdict(rec["source"], rec["relation"], rec["target"], score, rec.get("analysis", ""))
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise GraphFormatError(f"bad reflection record: {exc}", line=lineno) from exc
    return out


# --------------------------------------------------------------------------
# reduction report
# --------------------------------------------------------------------------


def reduction_pct(before: int, after: int) -> float:
    if before == 0:
        return 0.0
    return round((before - after) / before * 100, 2)


@dataclass
class ReductionReport:
    entities_before: int
    entities_after: int
    entity_reduction_pct: float
    triples_before: int
    triples_after: int
    triple_reduction_pct: float
    per_stage: dict[str, dict[str, Any]] = field(default_factory=dict)

    @classmethod
    def from_counts(
        cls,
        entities_before: int,
        entities_after: int,
        triples_before: int,
        triples_after: int,
        per_stage: Mapping[str, Mapping[str, Any]] | None = None,
    ) -> ReductionReport:
        if entities_after > entities_before or triples_after > triples_before:
            raise ValueError(
                f"after counts exceed before counts: entities {entities_before}->{entities_after}, "
                f"triples {triples_before}->{triples_after}"
            )
        if min(entities_before, entities_after, triples_before, triples_after) < 0:
            raise ValueError("counts must be non-negative")
        return cls(
            entities_before,
            entities_after,
            reduction_pct(entities_before, entities_after),
            triples_before,
            triples_after,
            reduction_pct(triples_before, triples_after),
            {k: dict(v) for k, v in (per_stage or {}).items()},
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "entities_before": self.entities_before,
            "entities_after": self.entities_after,
            "entity_reduction_pct": self.entity_reduction_pct,
            "triples_before": self.triples_before,
            "triples_after": self.triples_after,
            "triple_reduction_pct": self.triple_reduction_pct,
            "per_stage": self.per_stage,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ReductionReport:
        return cls(
            int(d["entities_before"]),
            int(d["entities_after"]),
            float(d["entity_reduction_pct"]),
            int(d["triples_before"]),
            int(d["triples_after"]),
            float(d["triple_reduction_pct"]),
            dict(d.get("per_stage", {})),
        )


def build_reduction_report(
    before: GraphStats, after: GraphStats, stages: Mapping[str, Mapping[str, Any]] | None = None
) -> ReductionReport:
    return ReductionReport.from_counts(
        before.entity_count, after.entity_count, before.triple_count, after.triple_count, stages
    )


def dumps_report(report: ReductionReport) -> str:
    return json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n"


def write_reduction_report(
    before: GraphStats,
    after: GraphStats,
    stages: Mapping[str, Mapping[str, Any]] | None,
    stream: IO[bytes] | IO[str],
) -> ReductionReport:
    report = build_reduction_report(before, after, stages)
    _write_text(stream, dumps_report(report))
    return report


# --------------------------------------------------------------------------
# stage handoff files
# --------------------------------------------------------------------------


def _jsonl(records: Iterable[Mapping]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def _iter_jsonl(stream: IO[bytes] | IO[str]):
    for lineno, line in enumerate(_read_text(stream).splitlines(), start=1):
        if line.strip():
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphFormatError(exc.msg, line=lineno, column=exc.colno) from exc


def write_blocks(blocks: Sequence[Block], stream: IO[bytes] | IO[str]) -> None:
    _write_text(
        stream,
        _jsonl(
            {"id": b.id, "provenance": b.provenance, "origin": b.origin, "members": sorted(b.members)}
            for b in blocks
        ),
    )


def read_blocks(stream: IO[bytes] | IO[str]) -> list[Block]:
    from .blocking import Block

    return [
        Block(int(r["id"]), frozenset(r["members"]), r["provenance"], r.get("origin"))
        for _, r in _iter_jsonl(stream)
    ]


def write_scored_pairs(pairs: Iterable[ScoredPair], stream: IO[bytes] | IO[str]) -> None:
    _write_text(stream, _jsonl({"a": p.a, "b": p.b, "sim": p.similarity} for p in pairs))


def read_scored_pairs(stream: IO[bytes] | IO[str]) -> list[ScoredPair]:
    from .matching import ScoredPair

    return [ScoredPair(r["a"], r["b"], float(r["sim"])) for _, r in _iter_jsonl(stream)]


def write_groups(groups: Sequence[MatchGroup], stream: IO[bytes] | IO[str]) -> None:
    doc = {"groups": [{"canonical": g.canonical, "members": sorted(g.members)} for g in groups]}
    _write_text(stream, json.dumps(doc, ensure_ascii=False, indent=2) + "\n")


def read_groups(stream: IO[bytes] | IO[str]) -> list[MatchGroup]:
    from .matching import MatchGroup

    doc = json.loads(_read_text(stream))
    return [MatchGroup(frozenset(g["members"]), g["canonical"]) for g in doc["groups"]]
