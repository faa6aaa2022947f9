"""Command line entry points.

Thin argparse layer over the pipeline stages. Every subcommand reads and
writes plain files (JSONL, TSV, TOML) so stages can be rerun, inspected,
and mixed with other tooling.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import classify as classify_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from .classify import PipelineConfig, classified_group_to_json, lint_unreachable_rules
from .diff import diff_from_groups, diff_snapshots, diff_to_groups, group_from_json, group_to_json
from .ingest import PopularityTable, collect_relation_meta, load_popularity, load_relation_meta, read_snapshot
from .model import object_key, object_to_json, parse_timestamp
from .neighbors import build_feature_docs, build_tfidf_index, k_nearest_triples
from .pipeline import (
    RunConfig,
    dumps_canonical,
    emit_probe_requests,
    load_and_preprocess,
    load_responses,
    load_run_config,
    read_jsonl,
    run_pipeline,
    score_run,
    write_jsonl,
    write_report,
)
from .verbalize import (
    ChatCompletionsClient,
    Template,
    TripleDefinitions,
    extract_template,
    load_templates,
    request_verbalizations,
    sample_triples_for_templates,
    save_templates,
    select_templates,
)

logger = logging.getLogger(__name__)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        t_old=parse_timestamp(args.t_old),
        t_new=parse_timestamp(args.t_new),
        random_seed=args.seed,
    )


def _load_meta(args: argparse.Namespace, *snapshot_paths):
    if getattr(args, "relation_meta", None):
        return load_relation_meta(args.relation_meta)
    meta = {}
    for path in snapshot_paths:
        meta.update(collect_relation_meta(read_snapshot(path)))
    return meta


def _load_popularity(args: argparse.Namespace) -> PopularityTable:
    if getattr(args, "popularity", None):
        return load_popularity(args.popularity)
    return PopularityTable()


def cmd_build(args: argparse.Namespace) -> int:
    overrides = {
        "seed": args.seed,
        "t_old": args.t_old,
        "t_new": args.t_new,
        "output_dir": args.output_dir,
    }
    config = load_run_config(args.config, overrides)
    outputs = run_pipeline(config)
    for name, path in outputs.items():
        print(f"{name}\t{path}")
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    meta = _load_meta(args, args.old, args.new)
    old = load_and_preprocess(args.old, meta)
    new = load_and_preprocess(args.new, meta)
    result = diff_snapshots(old.snapshot, new.snapshot)
    count = write_jsonl(args.out, (group_to_json(k, e) for k, e in diff_to_groups(result)))
    logger.info("wrote %d diff groups to %s", count, args.out)
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    if args.lint_rules:
        unreachable = lint_unreachable_rules(cfg.t_old, cfg.t_new)
        if unreachable:
            print("unreachable rules: " + ", ".join(str(i) for i in unreachable))
        else:
            print("unreachable rules: none")
        return 0
    if not args.diff or not args.out:
        raise SystemExit("classify needs --diff and --out (or --lint-rules)")
    groups = [group_from_json(row) for row in read_jsonl(args.diff)]
    diff = diff_from_groups(groups)
    meta = load_relation_meta(args.relation_meta) if args.relation_meta else {}
    popularity = _load_popularity(args)
    classified = classify_mod.classify_diff(diff, cfg, meta, popularity)
    write_jsonl(args.out, (classified_group_to_json(g) for g in classified))
    logger.info("classified %d groups", len(classified))
    return 0


def cmd_neighbors(args: argparse.Namespace) -> int:
    meta = _load_meta(args, args.old, args.new)
    old = load_and_preprocess(args.old, meta)
    new = load_and_preprocess(args.new, meta)
    popularity = _load_popularity(args)
    docs = build_feature_docs(old.snapshot, new.snapshot)
    index = build_tfidf_index(docs)

    def rows():
        for data in read_jsonl(args.groups):
            group = classify_mod.classified_group_from_json(data)
            query = pipeline_mod.group_new_triple(group) or group.triples[0][0]
            facts = []
            if query.subject.id in index.rows:
                facts = k_nearest_triples(query, index, old.snapshot, args.k,
                                          args.n, popularity)
            yield {
                "subject": group.key.subject.id,
                "relation": group.key.relation.id,
                "neighbors": [
                    {
                        "subject": f.triple.subject.id,
                        "relation": f.triple.relation.id,
                        "object": object_to_json(f.triple.object),
                        "similarity": round(f.similarity, 12),
                        "popularity": f.subject_popularity,
                    }
                    for f in facts
                ],
            }

    count = write_jsonl(args.out, rows())
    logger.info("wrote neighbor lists for %d groups", count)
    return 0


def cmd_verbalize(args: argparse.Namespace) -> int:
    """Produce a relation template file.

    With --sentences, templates are extracted offline from precomputed
    verbalizations (JSONL: relation, sentence, subject_label, object_label).
    Otherwise triples are sampled from the old snapshot and sent to a
    chat-completions endpoint.
    """
    candidates: List[Template] = []
    if args.sentences:
        for row in read_jsonl(args.sentences):
            template = extract_template(row["sentence"], row["subject_label"],
                                        row["object_label"], row["relation"])
            if template is not None:
                candidates.append(template)
    else:
        if not (args.endpoint and args.model and args.old):
            raise SystemExit("verbalize needs --sentences, or --old with "
                             "--endpoint and --model")
        meta = _load_meta(args, args.old)
        old = load_and_preprocess(args.old, meta)
        popularity = _load_popularity(args)
        client = ChatCompletionsClient(args.endpoint, args.model, args.token)
        labels = old.labels
        for triple in sample_triples_for_templates(old.snapshot, popularity,
                                                   seed=args.seed):
            subject_label = labels.get(triple.subject.id)
            from .model import object_display

            try:
                obj_label = object_display(triple.object, labels)
            except ValueError:
                continue
            if not subject_label or not obj_label:
                continue
            definitions = TripleDefinitions(
                subject=subject_label,
                relation=triple.relation.label or triple.relation.id,
                object=obj_label,
            )
            try:
                sentences = request_verbalizations(definitions, client)
            except Exception as exc:  # noqa: BLE001
                logger.warning("verbalization failed for %s: %s", triple.subject.id, exc)
                continue
            for sentence in sentences:
                template = extract_template(sentence, subject_label, obj_label,
                                            triple.relation.id)
                if template is not None:
                    candidates.append(template)
    by_relation: Dict[str, List[Template]] = {}
    for candidate in candidates:
        by_relation.setdefault(candidate.relation, []).append(candidate)
    selected: List[Template] = []
    for relation in sorted(by_relation):
        selected.extend(select_templates(by_relation[relation]))
    save_templates(args.out, selected)
    logger.info("kept %d templates for %d relations", len(selected), len(by_relation))
    return 0


def cmd_emit_probe(args: argparse.Namespace) -> int:
    records = list(read_jsonl(args.dataset))
    requests, plan = emit_probe_requests(
        records, mode=args.mode, generation_length=args.generation_length,
        random_neighbor_count=args.random_neighbors, seed=args.seed)
    write_jsonl(args.out, requests)
    if args.plan:
        write_jsonl(args.plan, plan)
    logger.info("emitted %d probe requests", len(requests))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    plan = list(read_jsonl(args.plan))
    expected = {item["request_id"] for item in plan}
    pre = load_responses(args.pre, expected)
    post = load_responses(args.post, expected)
    results, aggregate, figure_records = score_run(
        plan, pre, post, probability_mode=args.probability_mode,
        algorithm=args.algorithm)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def case_row(result: metrics_mod.UpdateCaseResult) -> dict:
        row = dataclasses.asdict(result)
        row["algorithm"] = args.algorithm
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in row.items()}

    write_jsonl(out / f"cases.{args.algorithm}.jsonl", map(case_row, results))
    write_jsonl(out / f"neighbors.{args.algorithm}.jsonl",
                (dataclasses.asdict(r) for r in figure_records))
    write_report(out / f"report.{args.algorithm}", {args.algorithm: aggregate})
    matrix = metrics_mod.bleedover_bins(figure_records, bins=args.bins)
    (out / f"figure.{args.algorithm}.json").write_text(
        dumps_canonical(matrix) + "\n", encoding="utf-8")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    """Combine per-algorithm case files into one report table, and
    per-algorithm neighbor files into the bleedover bin matrix."""
    by_algorithm: Dict[str, List[metrics_mod.UpdateCaseResult]] = {}
    for path in args.cases:
        for row in read_jsonl(path):
            algorithm = row.pop("algorithm", Path(path).stem)
            values = {k: (float("nan") if v is None else v)
                      for k, v in row.items()}
            by_algorithm.setdefault(algorithm, []).append(
                metrics_mod.UpdateCaseResult(**values))
    aggregates = {
        algorithm: pipeline_mod.aggregate_cases(results)
        for algorithm, results in by_algorithm.items()
    }
    write_report(args.out, aggregates)
    neighbor_records = []
    for path in args.neighbors or []:
        for row in read_jsonl(path):
            neighbor_records.append(metrics_mod.NeighborBleedoverRecord(**row))
    if neighbor_records:
        matrix = metrics_mod.bleedover_bins(neighbor_records, bins=args.bins)
        Path(str(args.out) + ".figure.json").write_text(
            dumps_canonical(matrix) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factdiff")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="run the full pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--t-old", required=True)
    p.add_argument("--t-new", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("diff", help="diff two preprocessed snapshots")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--relation-meta")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("classify", help="classify a diff into update scenarios")
    p.add_argument("--diff")
    p.add_argument("--relation-meta")
    p.add_argument("--popularity")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-old", default="2021-01-04")
    p.add_argument("--t-new", default="2023-02-27")
    p.add_argument("--lint-rules", action="store_true",
                   help="report classification rules shadowed by earlier rules")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("neighbors", help="attach nearest-neighbor facts to groups")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--relation-meta")
    p.add_argument("--popularity")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("verbalize", help="build a relation template file")
    p.add_argument("--sentences")
    p.add_argument("--old")
    p.add_argument("--relation-meta")
    p.add_argument("--popularity")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--token")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verbalize)

    p = sub.add_parser("emit-probe", help="emit probe request files from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=["pre", "post", "prompt-baseline"],
                   default="post")
    p.add_argument("--generation-length", type=int, default=100)
    p.add_argument("--random-neighbors", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plan")
    p.set_defaults(func=cmd_emit_probe)

    p = sub.add_parser("score", help="score probe responses into per-update metrics")
    p.add_argument("--plan", required=True)
    p.add_argument("--pre", required=True)
    p.add_argument("--post", required=True)
    p.add_argument("--algorithm", default="algorithm")
    p.add_argument("--probability-mode", choices=["geometric", "joint"],
                   default="geometric")
    p.add_argument("--bins", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="combine scored runs into one table")
    p.add_argument("--cases", nargs="+", required=True)
    p.add_argument("--neighbors", nargs="*")
    p.add_argument("--bins", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
