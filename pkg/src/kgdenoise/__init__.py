"""Entity resolution and triple reflection for LLM-generated knowledge graphs."""

from .blocking import Block, make_blocks, semantic_blocks, structural_blocks, type_blocks
from .embeddings import EmbeddingTable, TrainConfig, embed_descriptions, load_external_embeddings, tail_ranks, train_kg_embeddings
from .graph import (
    Entity,
    GraphBuilder,
    KnowledgeGraph,
    Triple,
    connected_components,
    graph_stats,
    neighbors,
    validate,
)
from .graphio import ReductionReport, load_graph, read_graph, save_graph, write_graph
from .llm import ServiceClient, ServiceConfig
from .matching import MatchGroup, ScoredPair, SimilarityMode, group_by_target_ratio, group_by_threshold, score_blocks
from .merging import MergePlan, MergeReport, apply_merge_plan, direct_merge, merge_with_link, synonym_link
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .reflection import JudgeConfig, LLMJudge, MockJudge, ReflectionVerdict, filter_triples, reflect_graph
from .synth import GroundTruth, HashEmbedder, NoiseSpec, generate_noisy_kg, reflection_metrics, resolution_metrics, two_cluster_graph

__all__ = [
    "Block",
    "EmbeddingTable",
    "Entity",
    "GraphBuilder",
    "GroundTruth",
    "HashEmbedder",
    "JudgeConfig",
    "KnowledgeGraph",
    "LLMJudge",
    "MatchGroup",
    "MergePlan",
    "MergeReport",
    "MockJudge",
    "NoiseSpec",
    "PipelineConfig",
    "PipelineResult",
    "ReductionReport",
    "ReflectionVerdict",
    "ScoredPair",
    "ServiceClient",
    "ServiceConfig",
    "SimilarityMode",
    "TrainConfig",
    "Triple",
    "apply_merge_plan",
    "connected_components",
    "direct_merge",
    "embed_descriptions",
    "filter_triples",
    "generate_noisy_kg",
    "graph_stats",
    "group_by_target_ratio",
    "group_by_threshold",
    "load_external_embeddings",
    "load_graph",
    "make_blocks",
    "merge_with_link",
    "neighbors",
    "read_graph",
    "reflect_graph",
    "reflection_metrics",
    "resolution_metrics",
    "run_pipeline",
    "save_graph",
    "score_blocks",
    "semantic_blocks",
    "structural_blocks",
    "synonym_link",
    "tail_ranks",
    "train_kg_embeddings",
    "two_cluster_graph",
    "type_blocks",
    "validate",
    "write_graph",
]
