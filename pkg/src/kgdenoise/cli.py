"""``kgdenoise`` command line.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .blocking import make_blocks
from .embeddings import CoverageError, EmbeddingFormatError
from .graph import graph_stats
from .graphio import (
    GraphFormatError,
    GraphIntegrityError,
    dumps_graph,
    dumps_report,
    read_blocks,
    read_graph,
    read_groups,
    write_blocks,
    write_graph,
    write_groups,
    write_reflection_log,
    write_scored_pairs,
)
from .matching import group_by_target_ratio, group_by_threshold, score_blocks
from .merging import MergeError, MergePlan, MergeReport, apply_merge_plan
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    build_embeddings,
    build_judge,
    build_summarizers,
    load_config,
    run_pipeline,
)
from .reflection import reflect_graph
from .synth import GroundTruth, NoiseSpec, generate_noisy_kg, reflection_metrics, resolution_metrics

logger = logging.getLogger("kgdenoise")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default
        self.print_help(sys.stderr)
        raise UsageError(message)


def _add_graph(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("graph", nargs=None if required else "?", help="input graph (.json, or .tsv triples)")
    p.add_argument("--format", choices=["json", "tsv"], help="input format (default: by extension)")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--delta-er", type=float, help="similarity threshold for grouping (replaces --ratio)")
    p.add_argument("--ratio", type=float, help="target entity reduction ratio (replaces --delta-er)")
    p.add_argument("--delta-tr", type=float, help="reflection score threshold")
    p.add_argument("--seed", type=int, help="root random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgdenoise", description="Entity resolution and triple reflection for knowledge graphs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("denoise", help="run the full pipeline")
    _add_graph(p, required=False)
    _add_config(p)
    p.add_argument("--out", help="output graph JSON (default: stdout)")
    p.add_argument("--report", help="reduction report JSON")
    p.add_argument("--log", help="reflection verdicts JSONL")

    p = sub.add_parser("block", help="partition entities into candidate blocks")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--out", required=True, help="blocks JSONL")

    p = sub.add_parser("match", help="score candidate pairs and group matches")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--blocks", required=True, help="blocks JSONL from 'block'")
    p.add_argument("--out", required=True, help="groups JSON")
    p.add_argument("--pairs", help="also write scored pairs JSONL")

    p = sub.add_parser("merge", help="apply match groups to a graph")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--groups", required=True, help="groups JSON from 'match'")
    p.add_argument("--out", required=True, help="output graph JSON")

    p = sub.add_parser("reflect", help="judge triples and drop low-scored ones")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--out", required=True, help="output graph JSON")
    p.add_argument("--log", help="reflection verdicts JSONL")

    p = sub.add_parser("stats", help="print graph statistics as JSON")
    _add_graph(p)

    p = sub.add_parser("synth", help="generate a synthetic noisy graph")
    p.add_argument("--spec", help="generator spec JSON (default settings when omitted)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out", required=True, help="output graph JSON")
    p.add_argument("--truth", help="ground truth JSON")

    p = sub.add_parser("eval", help="score groups or reflection output against ground truth")
    p.add_argument("--truth", required=True, help="ground truth JSON from 'synth'")
    p.add_argument("--graph", required=True, help="graph the truth refers to")
    p.add_argument("--groups", help="groups JSON to score")
    p.add_argument("--filtered", help="graph after reflection, to score removed triples")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"no {what} given")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return p


def _read_json(path: str, what: str) -> Any:
    p = _require_file(path, what)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc


def _config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(_require_file(args.config, "config file")) if args.config else PipelineConfig()
    return config.with_overrides(
        delta_er=args.delta_er, target_ratio=args.ratio, delta_tr=args.delta_tr, seed=args.seed
    )


def _graph(path: str | None, fmt: str | None):
    return read_graph(_require_file(path, "input graph"), fmt)


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_denoise(args: argparse.Namespace) -> int:
    config = _config(args)
    paths = config.paths
    graph_path = args.graph or paths.input
    out, report_path, log_path = args.out or paths.output, args.report or paths.report, args.log or paths.reflection_log
    graph = _graph(graph_path, args.format)
    config.check_files()

    log_fh = open(log_path, "wb") if log_path and config.reflection_enabled else None
    try:
        result = run_pipeline(graph, config, log_stream=log_fh)
    except StageError as exc:
        if report_path:
            Path(report_path).write_text(
                json.dumps({"failed_stage": exc.stage, "error": str(exc.cause), "per_stage": exc.per_stage}, indent=2)
                + "\n",
                encoding="utf-8",
            )
        raise
    finally:
        if log_fh:
            log_fh.close()

    if out:
        write_graph(result.graph, out)
    else:
        sys.stdout.write(dumps_graph(result.graph))
    if report_path:
        Path(report_path).write_text(dumps_report(result.report), encoding="utf-8")
    r = result.report
    print(
        f"entities {r.entities_before} -> {r.entities_after} ({r.entity_reduction_pct:.2f}% removed), "
        f"triples {r.triples_before} -> {r.triples_after} ({r.triple_reduction_pct:.2f}% removed)",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_block(args: argparse.Namespace) -> int:
    config = _config(args)
    graph = _graph(args.graph, args.format)
    table = build_embeddings(graph, config) if config.blocking != "structural" else None
    blocks = make_blocks(graph, config.blocking, table, config.seed, config.max_block_size)
    with open(args.out, "wb") as fh:
        write_blocks(blocks, fh)
    print(f"{len(blocks)} blocks written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    config = _config(args)
    graph = _graph(args.graph, args.format)
    with open(_require_file(args.blocks, "blocks file"), "rb") as fh:
        blocks = read_blocks(fh)
    table = build_embeddings(graph, config)
    pairs = score_blocks(graph, table, blocks, config.similarity_mode, config.type_normalization)
    if config.delta_er is not None:
        groups = group_by_threshold(pairs, config.delta_er, config.canonical_policy, config.seed)
    else:
        groups = group_by_target_ratio(
            pairs, max(len(graph.entities), 1), config.target_ratio, config.canonical_policy, config.seed
        ).groups
    with open(args.out, "wb") as fh:
        write_groups(groups, fh)
    if args.pairs:
        with open(args.pairs, "wb") as fh:
            write_scored_pairs(pairs, fh)
    print(f"{len(pairs)} pairs scored, {len(groups)} groups written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_merge(args: argparse.Namespace) -> int:
    config = _config(args)
    graph = _graph(args.graph, args.format)
    with open(_require_file(args.groups, "groups file"), "rb") as fh:
        groups = read_groups(fh)
    plan = MergePlan(groups, config.merge_strategy, config.synonym_label, config.token_budget)
    report = MergeReport()
    summarizer, rel_summarizer = build_summarizers(config)
    merged = apply_merge_plan(graph, plan, summarizer, rel_summarizer, report)
    write_graph(merged, args.out)
    _emit(report.to_dict())
    return EXIT_OK


def cmd_reflect(args: argparse.Namespace) -> int:
    config = _config(args)
    graph = _graph(args.graph, args.format)
    result = reflect_graph(graph, build_judge(config), config.reflection, None, config.synonym_label)
    write_graph(result.graph, args.out)
    if args.log:
        with open(args.log, "wb") as fh:
            write_reflection_log(result.verdicts, fh)
    print(f"{len(result.removed)} of {len(graph.triples)} triples removed", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    _emit(graph_stats(_graph(args.graph, args.format)).to_dict())
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec_dict = _read_json(args.spec, "spec file") if args.spec else {}
    if not isinstance(spec_dict, dict):
        raise ConfigError("spec must be a JSON object")
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    try:
        spec = NoiseSpec.from_dict(spec_dict)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    graph, truth = generate_noisy_kg(spec)
    write_graph(graph, args.out)
    if args.truth:
        Path(args.truth).write_text(json.dumps(truth.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"{len(graph.entities)} entities, {len(graph.triples)} triples written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    truth = GroundTruth.from_dict(_read_json(args.truth, "truth file"))
    graph = _graph(args.graph, None)
    out: dict[str, Any] = {}
    if args.groups:
        with open(_require_file(args.groups, "groups file"), "rb") as fh:
            groups = read_groups(fh)
        out["resolution"] = resolution_metrics(groups, truth, graph.entity_ids).to_dict()
    if args.filtered:
        filtered = _graph(args.filtered, None)
        before = {t.key for t in graph.triples}
        removed = before - {t.key for t in filtered.triples}
        out["reflection"] = reflection_metrics(removed, truth, before).to_dict()
    if not out:
        raise UsageError("eval needs --groups and/or --filtered")
    _emit(out)
    return EXIT_OK


COMMANDS = {
    "denoise": cmd_denoise,
    "block": cmd_block,
    "match": cmd_match,
    "merge": cmd_merge,
    "reflect": cmd_reflect,
    "stats": cmd_stats,
    "synth": cmd_synth,
    "eval": cmd_eval,
}

_INVALID = (
    UsageError,
    FileNotFoundError,
    ConfigError,
    GraphFormatError,
    GraphIntegrityError,
    EmbeddingFormatError,
    CoverageError,
    MergeError,
    ValueError,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
