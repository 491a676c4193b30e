"""Pipeline configuration and the full denoise pass.

Stage order: embeddings, blocking, candidate pairs, scoring, grouping,
merging, reflection, report. ``reflection_first`` moves reflection ahead of
entity resolution for ablations.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Any, Mapping

from .blocking import DEFAULT_MAX_BLOCK_SIZE, STRATEGIES, Block, make_blocks
from .embeddings import (
    MODELS,
    EmbeddingTable,
    TextEmbedder,
    TrainConfig,
    embed_descriptions,
    load_external_embeddings,
    train_kg_embeddings,
)
from .graph import KnowledgeGraph, Triple, graph_stats
from .graphio import ReductionReport
from .llm import LLMSummarizer, ServiceClient, ServiceConfig
from .matching import (
    CANONICAL_POLICIES,
    MatchGroup,
    ScoredPair,
    SimilarityMode,
    group_by_target_ratio,
    group_by_threshold,
    score_blocks,
)
from .merging import (
    DEFAULT_SYNONYM_LABEL,
    DEFAULT_TOKEN_BUDGET,
    MERGE_STRATEGIES,
    MergePlan,
    MergeReport,
    Summarizer,
    apply_merge_plan,
)
from .reflection import Judge, JudgeConfig, LLMJudge, MockJudge, ReflectionVerdict, reflect_graph
from .synth import HashEmbedder

logger = logging.getLogger(__name__)

EMBEDDING_SOURCES = (*MODELS, "external_file", "service", "mock")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``per_stage`` holds the counts of stages that finished."""

    def __init__(self, stage: str, cause: BaseException, per_stage: Mapping[str, Any] | None = None):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.per_stage = dict(per_stage or {})


@dataclass
class PipelinePaths:
    input: str | None = None
    output: str | None = None
    report: str | None = None
    reflection_log: str | None = None


@dataclass
class PipelineConfig:
    blocking: str = "semantic"
    embedding_source: str = "service"
    embedding_file: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    mock_dimension: int = 32
    similarity_mode: str = SimilarityMode.EGO.value
    type_normalization: str = "shared"
    delta_er: float | None = None
    target_ratio: float | None = 0.4
    canonical_policy: str = "seeded_random"
    seed: int = 0
    merge_strategy: str = "direct_merge"
    synonym_label: str = DEFAULT_SYNONYM_LABEL
    summarizer: str = "llm"
    token_budget: int = DEFAULT_TOKEN_BUDGET
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE
    reflection_enabled: bool = True
    reflection_first: bool = False
    reflection: JudgeConfig = field(default_factory=lambda: JudgeConfig(backend="llm"))
    service: ServiceConfig = field(default_factory=ServiceConfig)
    paths: PipelinePaths = field(default_factory=PipelinePaths)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.blocking in STRATEGIES, f"blocking must be one of {STRATEGIES}"),
            (self.embedding_source in EMBEDDING_SOURCES, f"embedding_source must be one of {EMBEDDING_SOURCES}"),
            (self.similarity_mode in {m.value for m in SimilarityMode}, f"unknown similarity_mode {self.similarity_mode!r}"),
            (self.type_normalization in ("shared", "all"), "type_normalization must be 'shared' or 'all'"),
            (self.canonical_policy in CANONICAL_POLICIES, f"canonical_policy must be one of {CANONICAL_POLICIES}"),
            (self.merge_strategy in MERGE_STRATEGIES, f"merge_strategy must be one of {MERGE_STRATEGIES}"),
            (self.summarizer in ("llm", "none"), "summarizer must be 'llm' or 'none'"),
            ((self.delta_er is None) != (self.target_ratio is None), "set exactly one of delta_er and target_ratio"),
            (self.target_ratio is None or 0 <= self.target_ratio < 1, "target_ratio must lie in [0, 1)"),
            (self.token_budget >= 1 and self.max_block_size >= 1, "token_budget and max_block_size must be positive"),
            (self.embedding_source != "external_file" or bool(self.embedding_file), "external_file needs embedding_file"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def check_files(self) -> None:
        """Referenced input files must exist before a run starts."""
        for label, path in (("input", self.paths.input), ("embedding_file", self.embedding_file)):
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"{label} file not found: {path}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> PipelineConfig:
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "delta_er" in d and d["delta_er"] is not None and "target_ratio" not in d:
            d["target_ratio"] = None
        try:
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "reflection" in d:
                d["reflection"] = JudgeConfig(**{"backend": "llm", **d["reflection"]})
            if "service" in d:
                d["service"] = ServiceConfig.from_dict(d["service"])
            if "paths" in d:
                d["paths"] = PipelinePaths(**d["paths"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> PipelineConfig:
        """Copy with flag overrides; ``delta_er`` and ``target_ratio`` displace each other."""
        d = self.to_dict()
        if overrides.get("delta_er") is not None:
            d["delta_er"], d["target_ratio"] = overrides["delta_er"], None
        if overrides.get("target_ratio") is not None:
            d["target_ratio"], d["delta_er"] = overrides["target_ratio"], None
        if overrides.get("delta_tr") is not None:
            d["reflection"]["threshold"] = overrides["delta_tr"]
        if overrides.get("seed") is not None:
            d["seed"] = overrides["seed"]
        return PipelineConfig.from_dict(d)


@dataclass
class PipelineResult:
    graph: KnowledgeGraph
    report: ReductionReport
    verdicts: list[ReflectionVerdict]
    groups: list[MatchGroup]
    blocks: list[Block]
    pairs: list[ScoredPair]
    removed: list[Triple]
    merge_report: MergeReport


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------


def build_embeddings(
    graph: KnowledgeGraph, config: PipelineConfig, embedder: TextEmbedder | None = None
) -> EmbeddingTable:
    src = config.embedding_source
    if src in MODELS:
        train = TrainConfig(**{**asdict(config.train), "seed": config.seed})
        table = train_kg_embeddings(graph, src, train)
    elif src == "external_file":
        with open(config.embedding_file, "rb") as fh:  # type: ignore[arg-type]
            table = load_external_embeddings(fh)
    else:
        if embedder is None:
            embedder = HashEmbedder(config.mock_dimension) if src == "mock" else ServiceClient(config.service)
        table = embed_descriptions(graph.entities, embedder)
    table.check_coverage(graph.entity_ids)
    return table


def build_judge(config: PipelineConfig, client: ServiceClient | None = None) -> Judge:
    if config.reflection.backend == "mock":
        return MockJudge()
    return LLMJudge(client or ServiceClient(config.service), config.reflection.max_retries)


def build_summarizers(
    config: PipelineConfig, client: ServiceClient | None = None
) -> tuple[Summarizer | None, Summarizer | None]:
    if config.summarizer == "none":
        return None, None
    client = client or ServiceClient(config.service)
    return LLMSummarizer(client, "entity"), LLMSummarizer(client, "relation")


def extracted_triple_count(graph: KnowledgeGraph, synonym_label: str) -> int:
    """Triples excluding synonym links, so linking strategies never count as growth."""
    return sum(1 for t in graph.triples if t.relation != synonym_label)


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------


def run_pipeline(
    graph: KnowledgeGraph,
    config: PipelineConfig,
    embedder: TextEmbedder | None = None,
    judge: Judge | None = None,
    summarizer: Summarizer | None = None,
    relation_summarizer: Summarizer | None = None,
    table: EmbeddingTable | None = None,
    log_stream: IO[bytes] | IO[str] | None = None,
) -> PipelineResult:
    """Run the denoise pass. Backends left as ``None`` are built from ``config``."""
    stages: dict[str, dict[str, Any]] = {}
    current = "setup"

    def record(name: str, **counts: Any) -> None:
        stages[name] = counts
        logger.info("%s: %s", name, counts)

    verdicts: list[ReflectionVerdict] = []
    removed: list[Triple] = []
    merge_report = MergeReport()
    label = config.synonym_label

    try:
        if summarizer is None and relation_summarizer is None:
            summarizer, relation_summarizer = build_summarizers(config)
        if config.reflection_enabled and judge is None:
            judge = build_judge(config)

        before = graph
        work = graph

        def reflect(g: KnowledgeGraph) -> KnowledgeGraph:
            nonlocal verdicts, removed
            res = reflect_graph(g, judge, config.reflection, log_stream, label)  # type: ignore[arg-type]
            verdicts, removed = res.verdicts, res.removed
            record(
                "reflection",
                triples_in=len(g.triples),
                judged=len(res.verdicts),
                removed=len(res.removed),
                triples_out=len(res.graph.triples),
            )
            return res.graph

        if config.reflection_enabled and config.reflection_first:
            current = "reflection"
            work = reflect(work)

        current = "embeddings"
        if table is None:
            table = build_embeddings(work, config, embedder)
        else:
            table.check_coverage(work.entity_ids)
        record("embeddings", entities=len(work.entities), dimension=table.dimension, source=config.embedding_source)

        current = "blocking"
        blocks = make_blocks(work, config.blocking, table, config.seed, config.max_block_size)
        record(
            "blocking",
            strategy=config.blocking,
            blocks=len(blocks),
            largest_block=max((len(b.members) for b in blocks), default=0),
        )

        current = "scoring"
        pairs = score_blocks(work, table, blocks, config.similarity_mode, config.type_normalization)
        record("scoring", candidate_pairs=len(pairs), mode=config.similarity_mode)

        current = "grouping"
        if config.delta_er is not None:
            groups = group_by_threshold(pairs, config.delta_er, config.canonical_policy, config.seed)
            merges = sum(len(g) - 1 for g in groups)
            record("grouping", criterion="threshold", delta_er=config.delta_er, groups=len(groups), merges=merges)
        else:
            ratio = group_by_target_ratio(
                pairs, max(len(work.entities), 1), config.target_ratio, config.canonical_policy, config.seed  # type: ignore[arg-type]
            )
            groups, merges = ratio.groups, ratio.merges
            record(
                "grouping",
                criterion="target_ratio",
                target_ratio=config.target_ratio,
                target_merges=ratio.target_merges,
                groups=len(groups),
                merges=merges,
            )

        current = "merging"
        plan = MergePlan(groups, config.merge_strategy, label, config.token_budget)
        merged = apply_merge_plan(work, plan, summarizer, relation_summarizer, merge_report)
        record(
            "merging",
            strategy=config.merge_strategy,
            entities_in=len(work.entities),
            entities_out=len(merged.entities),
            triples_in=len(work.triples),
            triples_out=len(merged.triples),
            **merge_report.to_dict(),
        )
        work = merged

        if config.reflection_enabled and not config.reflection_first:
            current = "reflection"
            work = reflect(work)

        current = "report"
        report = ReductionReport.from_counts(
            graph_stats(before).entity_count,
            graph_stats(work).entity_count,
            extracted_triple_count(before, label),
            extracted_triple_count(work, label),
            stages,
        )
    except Exception as exc:
        raise StageError(current, exc, stages) from exc

    return PipelineResult(work, report, verdicts, groups, blocks, pairs, removed, merge_report)


def load_config(path: str | os.PathLike) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return PipelineConfig.from_dict(data)
