"""Labeling of diffed triples and typing of update scenarios.

Every triple gets a label from an ordered first-match rule table; groups
are then cleaned (post pass, anomaly resolution, filtering) and typed
into update scenarios. The rule table is implemented verbatim in its
printed order; a lint reports rules made unreachable by that order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

from .diff import DiffEntry, DiffResult, GroupStats, Membership, diff_to_groups, group_stats
from .ingest import PopularityTable, RelationMeta
from .model import (
    GroupKey,
    Label,
    NEG_INF,
    POS_INF,
    Scenario,
    TimeValue,
    Triple,
    object_key,
    triple_from_json,
    triple_to_json,
)

# Default creation-date relations: inception, date of birth, start time,
# time of discovery or invention, date of official opening, announcement
# date, point in time, publication date.
DEFAULT_CREATION_RELATIONS = frozenset(
    {"P571", "P569", "P580", "P575", "P1619", "P6949", "P585", "P577"}
)
# date of death, date of burial or cremation
DEFAULT_DEATH_RELATIONS = frozenset({"P570", "P4602"})
DEFAULT_POPULATION_RELATIONS = frozenset({"P1082"})


@dataclass(frozen=True)
class PipelineConfig:
    t_old: date
    t_new: date
    creation_relations: FrozenSet[str] = DEFAULT_CREATION_RELATIONS
    death_relations: FrozenSet[str] = DEFAULT_DEATH_RELATIONS
    population_relations: FrozenSet[str] = DEFAULT_POPULATION_RELATIONS
    population_undersample_factor: int = 14
    random_seed: int = 0

    def __post_init__(self) -> None:
        if self.t_old >= self.t_new:
            raise ValueError("t_old must precede t_new")
        if self.population_undersample_factor < 1:
            raise ValueError("undersample factor must be positive")


# --- New entity detection ------------------------------------------------------


def detect_new_entities(diff: DiffResult, cfg: PipelineConfig) -> Set[str]:
    """Entities that came into existence between t_old and t_new.

    e qualifies iff (i) it occurs only in new-side entries, and (ii) some
    triple (e, r, d) has a creation-date relation r with date d > t_old.
    """
    candidates = {
        entity_id
        for entity_id, parts in diff.occurrences.items()
        if parts == {Membership.NEW_ONLY}
    }
    if not candidates:
        return set()
    confirmed: Set[str] = set()
    for key, entries in diff.groups.items():
        if key.subject.id not in candidates or key.relation.id not in cfg.creation_relations:
            continue
        for entry in entries:
            obj = entry.object
            if isinstance(obj, TimeValue) and obj.value > cfg.t_old:
                confirmed.add(key.subject.id)
                break
    return confirmed


# --- Rule table ----------------------------------------------------------------


@dataclass(frozen=True)
class TripleContext:
    """Everything the rule table may inspect about one triple."""

    membership: Membership
    t_start: date
    t_end: date
    stats: GroupStats
    subject_in_e_plus: bool
    subject_in_f_minus: bool
    relation_is_death: bool
    relation_is_temporal_functional: bool
    object_in_e_plus: bool
    object_date: Optional[date] = None


@dataclass(frozen=True)
class Rule:
    number: int
    label: Label
    description: str
    condition: Callable[[TripleContext, PipelineConfig], bool]


def _death_new(ctx: TripleContext, cfg: PipelineConfig) -> bool:
    return (
        ctx.membership is Membership.NEW_ONLY
        and ctx.stats.n == 1
        and ctx.object_date is not None
        and cfg.t_old < ctx.object_date < cfg.t_new
    )


def _temporal_pair_new(ctx: TripleContext, cfg: PipelineConfig) -> bool:
    return (
        ctx.relation_is_temporal_functional
        and ctx.stats.n_minus == 1
        and ctx.stats.n_plus == 1
        and ctx.stats.n_zero == 0
        and ctx.membership is Membership.NEW_ONLY
        and cfg.t_old < ctx.t_start < cfg.t_new
    )


RULES: Tuple[Rule, ...] = (
    Rule(1, Label.NEW, "subject is a new entity",
         lambda ctx, cfg: ctx.subject_in_e_plus),
    Rule(2, Label.UNKNOWN, "subject occurs in no old-only triple",
         lambda ctx, cfg: not ctx.subject_in_f_minus),
    Rule(3, Label.NEW, "death relation, lone new-side triple dated within the window",
         lambda ctx, cfg: ctx.relation_is_death and _death_new(ctx, cfg)),
    Rule(4, Label.UNKNOWN, "death relation, any other shape",
         lambda ctx, cfg: ctx.relation_is_death and not _death_new(ctx, cfg)),
    Rule(5, Label.UNKNOWN, "inverted interval (t_start > t_end)",
         lambda ctx, cfg: ctx.t_start > ctx.t_end),
    Rule(6, Label.NEW, "temporal-functional 1/0/1 pair, new side started in window",
         lambda ctx, cfg: _temporal_pair_new(ctx, cfg)),
    Rule(7, Label.NEW, "temporal-functional 1/0/1 pair, new side started in window, still valid",
         lambda ctx, cfg: _temporal_pair_new(ctx, cfg)
         and (ctx.t_end == POS_INF or ctx.t_end > cfg.t_new)),
    Rule(8, Label.IGNORE, "new-side triple started in window but ended before t_old",
         lambda ctx, cfg: ctx.membership is Membership.NEW_ONLY
         and cfg.t_old < ctx.t_start < cfg.t_new and ctx.t_end < cfg.t_old),
    Rule(9, Label.STATIC, "open-ended, started before t_old",
         lambda ctx, cfg: ctx.t_end == POS_INF and ctx.t_start < cfg.t_old),
    Rule(10, Label.NEW, "open-ended, started within the window",
         lambda ctx, cfg: ctx.t_end == POS_INF and cfg.t_old < ctx.t_start < cfg.t_new),
    Rule(11, Label.IGNORE, "started after t_old",
         lambda ctx, cfg: ctx.t_start > cfg.t_old),
    Rule(12, Label.IGNORE, "started and ended within the window",
         lambda ctx, cfg: cfg.t_old < ctx.t_start < cfg.t_new
         and cfg.t_old < ctx.t_end < cfg.t_new),
    Rule(13, Label.OBSOLETE, "started before t_old, ended within the window",
         lambda ctx, cfg: ctx.t_start < cfg.t_old and cfg.t_old < ctx.t_end < cfg.t_new),
    Rule(14, Label.STATIC, "started before t_old, ends after t_new",
         lambda ctx, cfg: ctx.t_start < cfg.t_old and ctx.t_end > cfg.t_new),
    Rule(15, Label.OBSOLETE, "ended within the window",
         lambda ctx, cfg: cfg.t_old < ctx.t_end < cfg.t_new),
    Rule(16, Label.STATIC, "ends after t_new",
         lambda ctx, cfg: ctx.t_end > cfg.t_new),
    Rule(17, Label.IGNORE, "old-only triple that ended before t_old",
         lambda ctx, cfg: ctx.membership is Membership.OLD_ONLY and ctx.t_end < cfg.t_old),
    Rule(18, Label.NEW, "new-side triple whose object is a new entity",
         lambda ctx, cfg: ctx.membership is Membership.NEW_ONLY and ctx.object_in_e_plus),
)


def classify_triple(ctx: TripleContext, cfg: PipelineConfig) -> Label:
    """First matching rule wins; 'unknown' when nothing fires."""
    for rule in RULES:
        if rule.condition(ctx, cfg):
            return rule.label
    return Label.UNKNOWN


def matching_rule(ctx: TripleContext, cfg: PipelineConfig) -> Optional[int]:
    for rule in RULES:
        if rule.condition(ctx, cfg):
            return rule.number
    return None


def build_context(
    entry: DiffEntry,
    stats: GroupStats,
    diff: DiffResult,
    e_plus: Set[str],
    meta: Mapping[str, RelationMeta],
    cfg: PipelineConfig,
) -> TripleContext:
    relation_meta = meta.get(entry.relation.id)
    obj = entry.object
    object_date = obj.value if isinstance(obj, TimeValue) else None
    object_in_e_plus = False
    from .model import Entity  # local import avoids a cycle at module load

    if isinstance(obj, Entity):
        object_in_e_plus = obj.id.id in e_plus
    subject_parts = diff.occurrences.get(entry.subject.id, set())
    return TripleContext(
        membership=entry.membership,
        t_start=entry.interval.start,
        t_end=entry.interval.end,
        stats=stats,
        subject_in_e_plus=entry.subject.id in e_plus,
        subject_in_f_minus=Membership.OLD_ONLY in subject_parts,
        relation_is_death=entry.relation.id in cfg.death_relations,
        relation_is_temporal_functional=bool(
            relation_meta is not None and relation_meta.is_temporal_functional
        ),
        object_in_e_plus=object_in_e_plus,
        object_date=object_date,
    )


# --- Group post-processing -----------------------------------------------------

LabeledEntry = Tuple[DiffEntry, Label]


def post_pass_obsolete(
    labeled: List[LabeledEntry], relation_is_temporal_functional: bool
) -> List[LabeledEntry]:
    """In a temporal-functional pair, the old-side partner of a 'new' triple
    becomes 'obsolete'."""
    if len(labeled) != 2 or not relation_is_temporal_functional:
        return labeled
    (entry_a, label_a), (entry_b, label_b) = labeled
    if label_a is Label.NEW and entry_b.membership is Membership.OLD_ONLY:
        return [(entry_a, label_a), (entry_b, Label.OBSOLETE)]
    if label_b is Label.NEW and entry_a.membership is Membership.OLD_ONLY:
        return [(entry_a, Label.OBSOLETE), (entry_b, label_b)]
    return labeled


def resolve_anomalies(labeled: List[LabeledEntry]) -> Optional[List[LabeledEntry]]:
    """Resolve objects that carry more than one label within a group.

    All-obsolete keeps one obsolete instance; all new/static keeps one
    static (or new when no static exists); any other mix deletes the
    whole group (returns None).
    """
    by_object: Dict[str, List[int]] = {}
    for index, (entry, _) in enumerate(labeled):
        by_object.setdefault(object_key(entry.object), []).append(index)
    drop: Set[int] = set()
    for indices in by_object.values():
        if len(indices) == 1:
            continue
        labels = [labeled[i][1] for i in indices]
        if all(label is Label.OBSOLETE for label in labels):
            drop.update(indices[1:])
        elif all(label in (Label.NEW, Label.STATIC) for label in labels):
            static = [i for i in indices if labeled[i][1] is Label.STATIC]
            keep = static[0] if static else indices[0]
            drop.update(i for i in indices if i != keep)
        else:
            return None
    return [pair for i, pair in enumerate(labeled) if i not in drop]


def filter_group(labeled: List[LabeledEntry]) -> Optional[List[LabeledEntry]]:
    """Drop groups with any 'unknown'; strip 'ignore'; drop all-static groups."""
    if any(label is Label.UNKNOWN for _, label in labeled):
        return None
    kept = [(entry, label) for entry, label in labeled if label is not Label.IGNORE]
    if not kept:
        return None
    if all(label is Label.STATIC for _, label in kept):
        return None
    return kept


def type_scenario(labels: Iterable[Label], subject_is_new: bool) -> Scenario:
    """Assign the update scenario, evaluated in precedence order."""
    labels = list(labels)
    counts = {label: labels.count(label) for label in Label}
    if subject_is_new:
        return Scenario.ADD_ENTITY
    if len(labels) == 2 and counts[Label.NEW] == 1 and counts[Label.OBSOLETE] == 1:
        return Scenario.REPLACE_OBJECT
    if labels and counts[Label.OBSOLETE] == len(labels):
        return Scenario.ARCHIVE
    if labels and counts[Label.NEW] == len(labels):
        return Scenario.ADD_RELATION
    if counts[Label.NEW] >= 1 and counts[Label.STATIC] >= 1 and counts[Label.OBSOLETE] == 0:
        return Scenario.ADD_OBJECT
    return Scenario.OTHER


# --- Classified groups ---------------------------------------------------------


@dataclass
class ClassifiedGroup:
    key: GroupKey
    triples: List[Tuple[Triple, Label]]
    scenario: Scenario
    subject_popularity: int = 0
    is_new_entity: bool = False

    @property
    def labels(self) -> List[Label]:
        return [label for _, label in self.triples]


def classify_group(
    entries: List[DiffEntry],
    diff: DiffResult,
    e_plus: Set[str],
    meta: Mapping[str, RelationMeta],
    cfg: PipelineConfig,
    popularity: Optional[PopularityTable] = None,
) -> Optional[ClassifiedGroup]:
    stats = group_stats(entries)
    labeled: List[LabeledEntry] = []
    for entry in entries:
        ctx = build_context(entry, stats, diff, e_plus, meta, cfg)
        labeled.append((entry, classify_triple(ctx, cfg)))
    relation_meta = meta.get(entries[0].relation.id)
    labeled = post_pass_obsolete(
        labeled, bool(relation_meta is not None and relation_meta.is_temporal_functional)
    )
    resolved = resolve_anomalies(labeled)
    if resolved is None:
        return None
    kept = filter_group(resolved)
    if kept is None:
        return None
    key = GroupKey(entries[0].subject, entries[0].relation)
    subject_is_new = key.subject.id in e_plus
    scenario = type_scenario([label for _, label in kept], subject_is_new)
    pop = popularity[key.subject.id] if popularity is not None else 0
    return ClassifiedGroup(
        key=key,
        triples=[(entry.triple, label) for entry, label in kept],
        scenario=scenario,
        subject_popularity=pop,
        is_new_entity=subject_is_new,
    )


def classify_diff(
    diff: DiffResult,
    cfg: PipelineConfig,
    meta: Mapping[str, RelationMeta],
    popularity: Optional[PopularityTable] = None,
) -> List[ClassifiedGroup]:
    """Run the full classification stage over a diff, in deterministic order."""
    e_plus = detect_new_entities(diff, cfg)
    groups: List[ClassifiedGroup] = []
    for key, entries in diff_to_groups(diff):
        ordered = sorted(entries, key=lambda e: object_key(e.object))
        group = classify_group(ordered, diff, e_plus, meta, cfg, popularity)
        if group is not None:
            groups.append(group)
    return groups


# --- Replacement subset --------------------------------------------------------


def _sample_hash(seed: int, key: GroupKey) -> int:
    digest = hashlib.blake2b(
        f"{seed}|{key.subject.id}|{key.relation.id}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def extract_replacement_subset(
    groups: Iterable[ClassifiedGroup], cfg: PipelineConfig
) -> List[ClassifiedGroup]:
    """Keep ReplaceObject groups, thinning population updates by the
    configured factor.

    Population groups are ranked by a seeded hash of their group key and
    the lowest-ranked 1-in-factor kept, so injecting unrelated groups never
    changes which population groups survive. Output is sorted by descending
    subject popularity (subject id as tie-break).
    """
    replacements = [g for g in groups if g.scenario is Scenario.REPLACE_OBJECT]
    population = [g for g in replacements if g.key.relation.id in cfg.population_relations]
    others = [g for g in replacements if g.key.relation.id not in cfg.population_relations]
    keep_count = len(population) // cfg.population_undersample_factor
    population.sort(key=lambda g: _sample_hash(cfg.random_seed, g.key))
    kept = others + population[:keep_count]
    kept.sort(key=lambda g: (-g.subject_popularity, g.key.subject.id, g.key.relation.id))
    return kept


# --- Unreachable-rule lint ------------------------------------------------------


def lint_unreachable_rules(
    t_old: date = date(2021, 1, 4), t_new: date = date(2023, 2, 27)
) -> List[int]:
    """Rule numbers that can never be the first match.

    Enumerates a grid of consistent contexts spanning every interval
    region (including boundaries and inverted intervals) and reports the
    rules no context reaches first.
    """
    cfg = PipelineConfig(t_old=t_old, t_new=t_new)
    before = date(2020, 6, 1)
    mid = date(2022, 1, 1)
    after = date(2024, 1, 1)
    times = (NEG_INF, before, t_old, mid, t_new, after, POS_INF)
    memberships = (Membership.OLD_ONLY, Membership.BOTH, Membership.NEW_ONLY)
    count_values = (0, 1, 2)
    reached: Set[int] = set()

    for membership in memberships:
        for n_minus in count_values:
            if membership is Membership.OLD_ONLY and n_minus == 0:
                continue
            for n_zero in count_values:
                if membership is Membership.BOTH and n_zero == 0:
                    continue
                for n_plus in count_values:
                    if membership is Membership.NEW_ONLY and n_plus == 0:
                        continue
                    stats = GroupStats(n_minus, n_zero, n_plus)
                    if stats.n == 0:
                        continue
                    for subject_in_e_plus in (False, True):
                        if subject_in_e_plus and (
                            membership is not Membership.NEW_ONLY or n_minus or n_zero
                        ):
                            continue
                        for subject_in_f_minus in (False, True):
                            if subject_in_e_plus and subject_in_f_minus:
                                continue
                            if n_minus >= 1 and not subject_in_f_minus:
                                continue
                            for death in (False, True):
                                dates = (None, before, mid, after) if death else (None,)
                                for temporal in (False, True):
                                    for object_in_e_plus in (False, True):
                                        for object_date in dates:
                                            for t_start in times:
                                                for t_end in times:
                                                    ctx = TripleContext(
                                                        membership=membership,
                                                        t_start=t_start,
                                                        t_end=t_end,
                                                        stats=stats,
                                                        subject_in_e_plus=subject_in_e_plus,
                                                        subject_in_f_minus=subject_in_f_minus,
                                                        relation_is_death=death,
                                                        relation_is_temporal_functional=temporal,
                                                        object_in_e_plus=object_in_e_plus,
                                                        object_date=object_date,
                                                    )
                                                    hit = matching_rule(ctx, cfg)
                                                    if hit is not None:
                                                        reached.add(hit)
    return sorted(rule.number for rule in RULES if rule.number not in reached)


# --- JSONL serialization --------------------------------------------------------


def classified_group_to_json(group: ClassifiedGroup) -> dict:
    return {
        "subject": group.key.subject.id,
        "subject_label": group.key.subject.label,
        "relation": group.key.relation.id,
        "relation_label": group.key.relation.label,
        "scenario": group.scenario.value,
        "subject_popularity": group.subject_popularity,
        "is_new_entity": group.is_new_entity,
        "triples": [
            dict(triple_to_json(triple), label=label.value) for triple, label in group.triples
        ],
    }


def classified_group_from_json(data: dict) -> ClassifiedGroup:
    from .model import EntityId, RelationId

    triples = []
    for row in data["triples"]:
        label = Label(row["label"])
        row = {k: v for k, v in row.items() if k != "label"}
        row.setdefault("subject", data["subject"])
        row.setdefault("relation", data["relation"])
        triples.append((triple_from_json(row), label))
    return ClassifiedGroup(
        key=GroupKey(
            EntityId(data["subject"], data.get("subject_label")),
            RelationId(data["relation"], data.get("relation_label")),
        ),
        triples=triples,
        scenario=Scenario(data["scenario"]),
        subject_popularity=int(data.get("subject_popularity", 0)),
        is_new_entity=bool(data.get("is_new_entity", False)),
    )
