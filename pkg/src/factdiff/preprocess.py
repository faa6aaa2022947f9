"""Filter cascade turning raw snapshots into reliable triple sets.

The cascade drops restricted, deprecated, meta, and unexploitable
statements, keeps only triples about relevant entities, and deduplicates
temporal-functional groups down to their most up-to-date value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .ingest import EntityDoc, RelationMeta
from .model import (
    Entity,
    EntityId,
    ExternalId,
    GlobeCoordinate,
    GroupKey,
    NoValue,
    SomeValue,
    Statement,
    TEMPORAL_QUALIFIERS,
    Triple,
    TripleKey,
    Url,
    group_key_of,
    interval_from_qualifiers,
    object_key,
    point_in_time_of,
)


class RejectReason(str, Enum):
    RESTRICTIVE_QUALIFIER = "restrictive_qualifier"
    DEPRECATED = "deprecated"
    META_RELATION = "meta_relation"
    URL_OR_EXTERNAL_ID = "url_or_external_id"
    GLOBE_COORDINATE = "globe_coordinate"
    SOME_OR_NO_VALUE = "some_or_no_value"
    IRRELEVANT_SUBJECT = "irrelevant_subject"
    IRRELEVANT_OBJECT = "irrelevant_object"


@dataclass(frozen=True)
class Rejection:
    subject: str
    relation: str
    reason: RejectReason


RejectSink = Callable[[Rejection], None]

RELEVANT_PAGE_KINDS = frozenset({"article", "article_section"})


@dataclass
class PreprocessedSnapshot:
    """Reliable triples keyed by (s, r, o), with an (s, r)-group index."""

    triples: Dict[TripleKey, Triple] = field(default_factory=dict)
    groups: Dict[GroupKey, List[Triple]] = field(default_factory=dict)
    relevant_entities: Set[str] = field(default_factory=set)

    def add(self, triple: Triple) -> None:
        self.triples[triple.key()] = triple
        self.groups.setdefault(group_key_of(triple), []).append(triple)


def is_relevant_entity(doc: EntityDoc) -> bool:
    """An item is relevant iff it has a dedicated article (or article section)."""
    if doc.kind != "item":
        return False
    return doc.sitelink.exists and doc.sitelink.page_kind in RELEVANT_PAGE_KINDS


def collect_relevant_entities(docs: Iterable[EntityDoc]) -> Set[str]:
    return {doc.id.id for doc in docs if doc.kind == "item" and is_relevant_entity(doc)}


def filter_statement(
    subject: EntityId,
    stmt: Statement,
    meta: Mapping[str, RelationMeta],
):
    """Apply the per-statement filters; returns a Triple or a Rejection.

    Rejection order: restrictive qualifier outside the temporal three,
    deprecated rank, meta relation, URL/external-id object, globe
    coordinate object, somevalue/novalue snaktype.
    """
    relation_meta = meta.get(stmt.relation.id)
    for qualifier_id in stmt.qualifiers:
        if qualifier_id in TEMPORAL_QUALIFIERS:
            continue
        qualifier_meta = meta.get(qualifier_id)
        if qualifier_meta is not None and qualifier_meta.is_restrictive_qualifier:
            return Rejection(subject.id, stmt.relation.id, RejectReason.RESTRICTIVE_QUALIFIER)
    if stmt.rank == "deprecated":
        return Rejection(subject.id, stmt.relation.id, RejectReason.DEPRECATED)
    if relation_meta is not None and relation_meta.is_meta:
        return Rejection(subject.id, stmt.relation.id, RejectReason.META_RELATION)
    if isinstance(stmt.object, (Url, ExternalId)):
        return Rejection(subject.id, stmt.relation.id, RejectReason.URL_OR_EXTERNAL_ID)
    if isinstance(stmt.object, GlobeCoordinate):
        return Rejection(subject.id, stmt.relation.id, RejectReason.GLOBE_COORDINATE)
    if isinstance(stmt.object, (SomeValue, NoValue)):
        return Rejection(subject.id, stmt.relation.id, RejectReason.SOME_OR_NO_VALUE)
    return Triple(
        subject=subject,
        relation=stmt.relation,
        object=stmt.object,
        interval=interval_from_qualifiers(stmt.qualifiers),
        rank=stmt.rank,
        point_in_time=point_in_time_of(stmt.qualifiers),
    )


def dedup_temporal_functional(group: List[Triple]) -> List[Triple]:
    """Keep only the most up-to-date triple of a temporal-functional group.

    When every triple carries a point-in-time-derived interval, the one with
    the latest point in time survives (ties broken by smallest serialized
    object). When some triple lacks a point in time, only preferred-ranked
    triples survive if any exist; otherwise the group is left unchanged.
    """
    if len(group) <= 1:
        return list(group)
    if all(t.point_in_time is not None for t in group):
        return [max(group, key=lambda t: (t.point_in_time, _neg_lex(object_key(t.object))))]
    preferred = [t for t in group if t.rank == "preferred"]
    if preferred:
        return preferred
    return list(group)


class _neg_lex:
    """Inverts lexicographic order so max() prefers the smallest string."""

    __slots__ = ("value",)

    def __init__(self, value: str):
        self.value = value

    def __lt__(self, other: "_neg_lex") -> bool:
        return self.value > other.value

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _neg_lex) and self.value == other.value


def preprocess_snapshot(
    docs: Iterable[EntityDoc],
    meta: Mapping[str, RelationMeta],
    relevant: Set[str],
    reject_sink: Optional[RejectSink] = None,
) -> PreprocessedSnapshot:
    """Run the full filter cascade over a snapshot stream.

    `relevant` must be precomputed over the same snapshot (two-pass input).
    Triples whose subject or entity-valued object is not relevant are
    dropped along with everything filter_statement rejects.
    """
    snapshot = PreprocessedSnapshot(relevant_entities=set(relevant))

    def reject(rejection: Rejection) -> None:
        if reject_sink is not None:
            reject_sink(rejection)

    for doc in docs:
        if doc.kind != "item":
            continue
        if doc.id.id not in relevant:
            for relation, statements in doc.claims.items():
                for _ in statements:
                    reject(Rejection(doc.id.id, relation.id, RejectReason.IRRELEVANT_SUBJECT))
            continue
        per_group: Dict[GroupKey, List[Triple]] = {}
        for relation, statements in doc.claims.items():
            for stmt in statements:
                result = filter_statement(doc.id, stmt, meta)
                if isinstance(result, Rejection):
                    reject(result)
                    continue
                obj = result.object
                if isinstance(obj, Entity) and obj.id.id not in relevant:
                    reject(Rejection(doc.id.id, relation.id, RejectReason.IRRELEVANT_OBJECT))
                    continue
                per_group.setdefault(group_key_of(result), []).append(result)
        for key, triples in per_group.items():
            relation_meta = meta.get(key.relation.id)
            if relation_meta is not None and relation_meta.is_temporal_functional:
                triples = dedup_temporal_functional(triples)
            for triple in triples:
                snapshot.add(triple)
    return snapshot
