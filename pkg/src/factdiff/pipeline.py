"""Pipeline orchestration: stage execution, dataset persistence, probe wire.

Files are the interface between stages. Every stage writes a manifest
(input hashes, counts, seed) so partial reruns are cheap and outputs are
reproducible byte-for-byte given the same inputs and seed.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from . import classify as classify_mod
from . import metrics as metrics_mod
from .classify import ClassifiedGroup, PipelineConfig, extract_replacement_subset
from .diff import DiffResult, diff_snapshots, diff_to_groups, group_to_json
from .ingest import (
    PopularityTable,
    RelationMeta,
    collect_relation_meta,
    load_popularity,
    load_relation_meta,
    read_snapshot,
)
from .model import (
    Entity,
    Label,
    Scenario,
    Triple,
    object_display,
    object_key,
    object_to_json,
    parse_timestamp,
)
from .neighbors import NeighborFact, build_feature_docs, build_tfidf_index, k_nearest_triples
from .preprocess import PreprocessedSnapshot, collect_relevant_entities, preprocess_snapshot
from .verbalize import Template, build_verbalization_set, load_templates, render

logger = logging.getLogger(__name__)


class UnansweredRequest(RuntimeError):
    def __init__(self, ids: Sequence[str]):
        super().__init__(f"unanswered probe requests: {sorted(ids)[:10]}"
                         + ("..." if len(ids) > 10 else ""))
        self.ids = sorted(ids)


class DuplicateResponse(RuntimeError):
    def __init__(self, ids: Sequence[str]):
        super().__init__(f"duplicate probe responses: {sorted(ids)[:10]}")
        self.ids = sorted(ids)


class MissingVerbalization(RuntimeError):
    pass


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: Union[str, Path], rows: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(dumps_canonical(row) + "\n")
            count += 1
    return count


def read_jsonl(path: Union[str, Path]) -> Iterable[dict]:
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path: Union[str, Path], stage: str, inputs: Mapping[str, str],
                   counts: Mapping[str, int], seed: int) -> None:
    manifest = {"stage": stage, "inputs": dict(inputs), "counts": dict(counts), "seed": seed}
    Path(path).write_text(dumps_canonical(manifest) + "\n", encoding="utf-8")


# --- Run configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    old_snapshot: Path
    new_snapshot: Path
    pipeline: PipelineConfig
    relation_meta: Optional[Path] = None
    popularity: Optional[Path] = None
    templates: Optional[Path] = None
    output_dir: Path = Path("out")
    neighbor_k: int = 10
    neighbor_n: int = 500
    max_alt_clozes: int = 4
    generation_length: int = 100
    random_neighbor_count: int = 10

    @property
    def seed(self) -> int:
        return self.pipeline.random_seed


def load_run_config(path: Union[str, Path], overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Load a TOML config file; overrides (CLI flags) win over file values."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib

    with open(path, "rb") as handle:
        data = tomllib.load(handle)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})

    def as_set(key: str, default: frozenset) -> frozenset:
        value = data.get(key)
        return frozenset(value) if value is not None else default

    pipeline = PipelineConfig(
        t_old=parse_timestamp(str(data["t_old"])),
        t_new=parse_timestamp(str(data["t_new"])),
        creation_relations=as_set("creation_relations", classify_mod.DEFAULT_CREATION_RELATIONS),
        death_relations=as_set("death_relations", classify_mod.DEFAULT_DEATH_RELATIONS),
        population_relations=as_set("population_relations",
                                    classify_mod.DEFAULT_POPULATION_RELATIONS),
        population_undersample_factor=int(data.get("population_undersample_factor", 14)),
        random_seed=int(data.get("seed", 0)),
    )
    base = Path(path).parent

    def as_path(key: str) -> Optional[Path]:
        value = data.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    return RunConfig(
        old_snapshot=as_path("old_snapshot"),
        new_snapshot=as_path("new_snapshot"),
        pipeline=pipeline,
        relation_meta=as_path("relation_meta"),
        popularity=as_path("popularity"),
        templates=as_path("templates"),
        output_dir=as_path("output_dir") or base / "out",
        neighbor_k=int(data.get("neighbor_k", 10)),
        neighbor_n=int(data.get("neighbor_n", 500)),
        max_alt_clozes=int(data.get("max_alt_clozes", 4)),
        generation_length=int(data.get("generation_length", 100)),
        random_neighbor_count=int(data.get("random_neighbor_count", 10)),
    )


# --- Stage execution ----------------------------------------------------------------


@dataclass
class SnapshotBundle:
    snapshot: PreprocessedSnapshot
    labels: Dict[str, str]
    doc_count: int = 0


def load_and_preprocess(
    path: Union[str, Path], meta: Mapping[str, RelationMeta], reject_sink=None
) -> SnapshotBundle:
    """Two-pass load: relevance + labels first, then the filter cascade."""
    labels: Dict[str, str] = {}
    relevant: Set[str] = set()
    doc_count = 0
    for doc in read_snapshot(path):
        doc_count += 1
        if doc.id.label is not None:
            labels[doc.id.id] = doc.id.label
        if doc.kind == "item" and doc.sitelink.exists and doc.sitelink.page_kind in (
            "article", "article_section",
        ):
            relevant.add(doc.id.id)
    snapshot = preprocess_snapshot(read_snapshot(path), meta, relevant, reject_sink)
    return SnapshotBundle(snapshot=snapshot, labels=labels, doc_count=doc_count)


def load_meta(config: RunConfig) -> Dict[str, RelationMeta]:
    if config.relation_meta is not None:
        return load_relation_meta(config.relation_meta)
    meta = collect_relation_meta(read_snapshot(config.old_snapshot))
    meta.update(collect_relation_meta(read_snapshot(config.new_snapshot)))
    return meta


# --- Dataset records ------------------------------------------------------------------


def _label_of(entity_id: str, labels: Mapping[str, str]) -> str:
    return labels.get(entity_id, entity_id)


def _display(obj, labels: Mapping[str, str]) -> str:
    return object_display(obj, labels)


def group_new_triple(group: ClassifiedGroup) -> Optional[Triple]:
    """The group's update target: its first 'new' triple by object order."""
    new_triples = [t for t, label in group.triples if label is Label.NEW]
    if not new_triples:
        return None
    return min(new_triples, key=lambda t: object_key(t.object))


def dataset_record(
    group: ClassifiedGroup,
    labels: Mapping[str, str],
    templates: Mapping[str, List[Template]],
    neighbors: Sequence[NeighborFact],
    max_alt_clozes: int = 4,
    rng_seed: int = 0,
) -> dict:
    """One dataset JSONL record for a classified group."""
    subject_label = group.key.subject.label or labels.get(group.key.subject.id)
    relation_label = group.key.relation.label or labels.get(group.key.relation.id)
    record = {
        "subject": {
            "id": group.key.subject.id,
            "label": subject_label,
            "popularity": group.subject_popularity,
            "is_new": group.is_new_entity,
        },
        "relation": {"id": group.key.relation.id, "label": relation_label},
        "scenario": group.scenario.value,
        "triples": [
            {"object": object_to_json(triple.object), "label": label.value}
            for triple, label in group.triples
        ],
        "verbalization": None,
        "neighbors": [],
    }
    relation_templates = templates.get(group.key.relation.id, [])
    new_triple = group_new_triple(group)
    if relation_templates and new_triple is not None and subject_label:
        try:
            verbalization = build_verbalization_set(
                relation_templates, subject_label, _display(new_triple.object, labels)
            )
            record["verbalization"] = {
                "update_sentence": verbalization.update_sentence,
                "cloze": verbalization.primary_cloze,
                "alt_clozes": list(verbalization.alt_clozes[:max_alt_clozes]),
            }
        except ValueError:
            logger.warning("could not verbalize group %s/%s",
                           group.key.subject.id, group.key.relation.id)
    for fact in neighbors:
        neighbor_templates = templates.get(fact.triple.relation.id, [])
        cloze = None
        if neighbor_templates:
            # A seeded choice on the neighbor key stands in for a random
            # template pick, keeping output reproducible.
            index = _stable_choice(rng_seed, fact.triple.subject.id,
                                   fact.triple.relation.id, len(neighbor_templates))
            chosen = sorted(neighbor_templates, key=lambda t: (-t.frequency, t.text))[index]
            neighbor_subject = fact.triple.subject.label or labels.get(
                fact.triple.subject.id, fact.triple.subject.id)
            cloze = render(chosen, neighbor_subject)
        record["neighbors"].append({
            "subject": fact.triple.subject.id,
            "subject_label": fact.triple.subject.label or labels.get(fact.triple.subject.id),
            "relation": fact.triple.relation.id,
            "object": object_to_json(fact.triple.object),
            "object_display": _safe_display(fact.triple.object, labels),
            "cloze": cloze,
            "similarity": round(fact.similarity, 12),
            "popularity": fact.subject_popularity,
        })
    return record


def _safe_display(obj, labels) -> Optional[str]:
    try:
        return _display(obj, labels)
    except ValueError:
        return None


def _stable_choice(seed: int, *parts) -> int:
    """Deterministic index in [0, n) from a seed and key parts; the last
    positional argument is n."""
    *key_parts, n = parts
    key = f"{seed}|" + "|".join(str(part) for part in key_parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % n


def build_dataset(
    config: RunConfig,
    old: SnapshotBundle,
    new: SnapshotBundle,
    meta: Mapping[str, RelationMeta],
    popularity: PopularityTable,
    templates: Mapping[str, List[Template]],
) -> Tuple[List[dict], List[dict]]:
    """Classify, attach neighbors and verbalizations, and produce the full
    dataset plus its replacement-only subset (both as JSON rows)."""
    diff = diff_snapshots(old.snapshot, new.snapshot)
    groups = classify_mod.classify_diff(diff, config.pipeline, meta, popularity)
    labels = dict(old.labels)
    labels.update(new.labels)

    docs = build_feature_docs(old.snapshot, new.snapshot)
    index = build_tfidf_index(docs) if docs else None

    def neighbors_for(group: ClassifiedGroup) -> List[NeighborFact]:
        if index is None:
            return []
        query = group_new_triple(group)
        if query is None:
            query = group.triples[0][0]
        if query.subject.id not in index.rows:
            return []
        return k_nearest_triples(query, index, old.snapshot, config.neighbor_k,
                                 config.neighbor_n, popularity)

    ordered = sorted(groups, key=lambda g: (-g.subject_popularity, g.key.subject.id,
                                            g.key.relation.id))
    records = [
        dataset_record(g, labels, templates, neighbors_for(g),
                       config.max_alt_clozes, config.seed)
        for g in ordered
    ]
    subset_groups = extract_replacement_subset(groups, config.pipeline)
    subset_keys = {(g.key.subject.id, g.key.relation.id) for g in subset_groups}
    subset_records = [
        r for r in records if (r["subject"]["id"], r["relation"]["id"]) in subset_keys
    ]
    return records, subset_records


def run_pipeline(config: RunConfig) -> Dict[str, Path]:
    """Execute every stage and write dataset files plus stage manifests."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = load_meta(config)
    popularity = load_popularity(config.popularity) if config.popularity else PopularityTable()
    templates = load_templates(config.templates) if config.templates else {}

    old = load_and_preprocess(config.old_snapshot, meta)
    new = load_and_preprocess(config.new_snapshot, meta)
    inputs = {
        str(config.old_snapshot): file_sha256(config.old_snapshot),
        str(config.new_snapshot): file_sha256(config.new_snapshot),
    }
    write_manifest(out / "preprocess.manifest.json", "preprocess", inputs,
                   {"old_triples": len(old.snapshot.triples),
                    "new_triples": len(new.snapshot.triples)}, config.seed)

    diff = diff_snapshots(old.snapshot, new.snapshot)
    diff_path = out / "diff.jsonl"
    write_jsonl(diff_path, (group_to_json(k, e) for k, e in diff_to_groups(diff)))
    write_manifest(out / "diff.manifest.json", "diff", inputs,
                   {"keys": len(diff.entries)}, config.seed)

    records, subset = build_dataset(config, old, new, meta, popularity, templates)
    dataset_path = out / "dataset.jsonl"
    subset_path = out / "replacements.jsonl"
    write_jsonl(dataset_path, records)
    write_jsonl(subset_path, subset)
    write_manifest(out / "dataset.manifest.json", "dataset", inputs,
                   {"updates": len(records), "replacements": len(subset)}, config.seed)
    return {"diff": diff_path, "dataset": dataset_path, "replacements": subset_path}


# --- Probe wire -------------------------------------------------------------------------


def case_id(*parts: str) -> str:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:24]


def emit_probe_requests(
    records: Sequence[dict],
    mode: str = "post",
    generation_length: int = 100,
    random_neighbor_count: int = 10,
    seed: int = 0,
) -> Tuple[List[dict], List[dict]]:
    """Probe request rows plus a plan describing each request's role.

    mode "pre"/"post" emit identical requests (the same file is scored
    before and after an update); "prompt-baseline" prefixes every prompt of
    a case with its update sentence followed by ". " -- including the
    case's neighbor clozes, which keeps the unrelated-prefix setting intact.
    """
    if mode not in ("pre", "post", "prompt-baseline"):
        raise ValueError(f"unknown probe mode {mode!r}")
    scoreable = [r for r in records if r.get("verbalization")]
    union: List[tuple] = []
    seen = set()
    for record in scoreable:
        for neighbor in record["neighbors"]:
            if neighbor["cloze"] is None or neighbor["object_display"] is None:
                continue
            key = (neighbor["subject"], neighbor["relation"], neighbor["cloze"])
            if key not in seen:
                seen.add(key)
                union.append((key, neighbor))
    requests: List[dict] = []
    plan: List[dict] = []

    for record in scoreable:
        verbalization = record["verbalization"]
        if not verbalization.get("update_sentence"):
            raise MissingVerbalization(record["subject"]["id"])
        group = f'{record["subject"]["id"]}|{record["relation"]["id"]}'
        prefix = ""
        if mode == "prompt-baseline":
            prefix = verbalization["update_sentence"] + ". "
        new_objects = [t["object"] for t in record["triples"] if t["label"] == "new"]
        old_objects = [t["object"] for t in record["triples"] if t["label"] == "obsolete"]
        if not new_objects or not old_objects:
            continue
        o_new = _json_object_display(new_objects[0])
        o_old = _json_object_display(old_objects[0])
        if o_new is None or o_old is None:
            continue

        def add_score(cloze: str, candidate: str, role: str, **extra) -> None:
            rid = case_id(group, cloze, candidate)
            requests.append({"case_id": rid, "kind": "score",
                             "prompt": prefix + cloze, "continuations": [candidate]})
            plan.append(dict({"request_id": rid, "case": group, "role": role,
                              "prompt": prefix + cloze, "continuation": candidate}, **extra))

        def add_generate(cloze: str, role: str) -> None:
            rid = case_id(group, cloze, "<generate>")
            requests.append({"case_id": rid, "kind": "generate",
                             "prompt": prefix + cloze,
                             "max_new_tokens": generation_length})
            plan.append({"request_id": rid, "case": group, "role": role,
                         "prompt": prefix + cloze})

        add_score(verbalization["cloze"], o_new, "efficacy", candidate_kind="new")
        add_score(verbalization["cloze"], o_old, "efficacy", candidate_kind="old")
        for cloze in verbalization["alt_clozes"]:
            add_score(cloze, o_new, "generalization", candidate_kind="new")
            add_score(cloze, o_old, "generalization", candidate_kind="old")
            add_generate(cloze, "fluency")
        own_keys = {(n["subject"], n["relation"], n["cloze"]) for n in record["neighbors"]}
        for neighbor in record["neighbors"]:
            if neighbor["cloze"] is None or neighbor["object_display"] is None:
                continue
            add_score(neighbor["cloze"], neighbor["object_display"], "bleedover_knn",
                      similarity=neighbor["similarity"], popularity=neighbor["popularity"])
        eligible = [item for item in union if item[0] not in own_keys]
        sampled = metrics_mod.sample_random_neighbors(
            [key for key, _ in eligible], random_neighbor_count,
            seed=_stable_choice(seed, group, 2**31) + seed, exclude=())
        by_key = {key: neighbor for key, neighbor in eligible}
        for key in sampled:
            neighbor = by_key[key]
            add_score(neighbor["cloze"], neighbor["object_display"], "bleedover_random",
                      similarity=neighbor["similarity"], popularity=neighbor["popularity"])
    return requests, plan


def _json_object_display(obj_json: dict) -> Optional[str]:
    from .model import object_from_json

    try:
        return object_display(object_from_json(obj_json))
    except ValueError:
        return None


def load_responses(path: Union[str, Path], expected_ids: Set[str]) -> Dict[str, dict]:
    responses: Dict[str, dict] = {}
    duplicates: Set[str] = set()
    for row in read_jsonl(path):
        rid = row["case_id"]
        if rid in responses:
            duplicates.add(rid)
        responses[rid] = row
    if duplicates:
        raise DuplicateResponse(sorted(duplicates))
    missing = expected_ids - set(responses)
    if missing:
        raise UnansweredRequest(sorted(missing))
    return responses


def score_run(
    plan: Sequence[dict],
    pre_responses: Mapping[str, dict],
    post_responses: Mapping[str, dict],
    probability_mode: str = "geometric",
    algorithm: str = "algorithm",
) -> Tuple[List[metrics_mod.UpdateCaseResult],
           Dict[str, metrics_mod.MetricSummary],
           List[metrics_mod.NeighborBleedoverRecord]]:
    """Join probe responses to cases and compute every per-update metric."""

    def probability(responses: Mapping[str, dict], rid: str) -> float:
        row = responses[rid]
        return metrics_mod.probability_from_logprobs(row["logprobs"][0], probability_mode)

    by_case: Dict[str, List[dict]] = {}
    for item in plan:
        by_case.setdefault(item["case"], []).append(item)

    results: List[metrics_mod.UpdateCaseResult] = []
    figure_records: List[metrics_mod.NeighborBleedoverRecord] = []
    for case, items in by_case.items():
        eff_new = eff_old = None
        gen_pairs: Dict[str, Dict[str, float]] = {}
        knn_pairs: List[Tuple[float, float]] = []
        random_pairs: List[Tuple[float, float]] = []
        generations: List[str] = []
        seconds = 0.0
        for item in items:
            rid = item["request_id"]
            seconds += float(post_responses[rid].get("seconds", 0.0))
            role = item["role"]
            if role == "efficacy":
                value = probability(post_responses, rid)
                if item["candidate_kind"] == "new":
                    eff_new = value
                else:
                    eff_old = value
            elif role == "generalization":
                slot = gen_pairs.setdefault(item["prompt"], {})
                slot[item["candidate_kind"]] = probability(post_responses, rid)
            elif role == "bleedover_knn":
                pair = (probability(pre_responses, rid), probability(post_responses, rid))
                knn_pairs.append(pair)
                figure_records.append(metrics_mod.NeighborBleedoverRecord(
                    algorithm=algorithm,
                    bleedover=metrics_mod.per_neighbor_bleedover(*pair),
                    popularity=float(item.get("popularity", 0)),
                    similarity=float(item.get("similarity", 0.0)),
                ))
            elif role == "bleedover_random":
                random_pairs.append(
                    (probability(pre_responses, rid), probability(post_responses, rid)))
            elif role == "fluency":
                generation = post_responses[rid].get("generation") or ""
                generations.append(generation)
        if eff_new is None or eff_old is None:
            raise metrics_mod.MissingCandidate(case)
        eff_diff, eff_success = metrics_mod.efficacy(eff_new, eff_old)
        if gen_pairs:
            gen_diff, gen_success = metrics_mod.generalization(
                [(slot["new"], slot["old"]) for slot in gen_pairs.values()])
        else:
            gen_diff = gen_success = float("nan")
        results.append(metrics_mod.UpdateCaseResult(
            case_id=case,
            efficacy_diff=eff_diff,
            efficacy_success=eff_success,
            gen_diff=gen_diff,
            gen_success=gen_success,
            bleedover_random=metrics_mod.bleedover(random_pairs) if random_pairs else float("nan"),
            bleedover_knn=metrics_mod.bleedover(knn_pairs) if knn_pairs else float("nan"),
            fluency=metrics_mod.fluency(generations) if generations else float("nan"),
            seconds=seconds,
        ))
    aggregate = aggregate_cases(results)
    return results, aggregate, figure_records


def aggregate_cases(results: Sequence[metrics_mod.UpdateCaseResult]) -> Dict[str, metrics_mod.MetricSummary]:
    """aggregate() with NaN cases dropped per metric (a case without alt
    clozes contributes efficacy but not generalization)."""
    import math as _math

    report: Dict[str, metrics_mod.MetricSummary] = {}
    for column in metrics_mod.METRIC_COLUMNS:
        values = [getattr(r, column) for r in results]
        values = [v for v in values if not _math.isnan(v)]
        if column in metrics_mod.SUCCESS_METRICS:
            values = [v * 100.0 for v in values]
        report[column] = metrics_mod.summarize(values)
    return report


REPORT_COLUMNS = (
    ("Efficacy-D", "efficacy_diff"),
    ("Efficacy-S", "efficacy_success"),
    ("Gen.-D", "gen_diff"),
    ("Gen.-S", "gen_success"),
    ("Bleedover-Random", "bleedover_random"),
    ("Bleedover-KNN", "bleedover_knn"),
    ("Fluency", "fluency"),
    ("seconds/update", "seconds"),
)


def report_rows(aggregates: Mapping[str, Mapping[str, metrics_mod.MetricSummary]]) -> List[dict]:
    rows = []
    for algorithm, summary in aggregates.items():
        row = {"algorithm": algorithm}
        for title, column in REPORT_COLUMNS:
            metric = summary[column]
            row[title] = {"mean": metric.mean, "ci95": metric.half_width, "n": metric.n}
        rows.append(row)
    return rows


def write_report(path_base: Union[str, Path],
                 aggregates: Mapping[str, Mapping[str, metrics_mod.MetricSummary]]) -> None:
    """Write the aggregate report as TSV and JSON."""
    base = Path(path_base)
    rows = report_rows(aggregates)
    # Append the extension rather than substituting it: base names such as
    # "report.rome" keep their algorithm part.
    Path(str(base) + ".json").write_text(
        dumps_canonical(rows) + "\n", encoding="utf-8")
    header = ["algorithm"] + [title for title, _ in REPORT_COLUMNS]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [row["algorithm"]]
        for title, _ in REPORT_COLUMNS:
            metric = row[title]
            cells.append(f'{metric["mean"]:.4f} ± {metric["ci95"]:.4f}')
        lines.append("\t".join(cells))
    Path(str(base) + ".tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
