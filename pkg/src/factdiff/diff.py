"""Three-way diff of two preprocessed snapshots.

Each distinct (s, r, o) key gets exactly one membership: present only in
the old snapshot, in both, or only in the new one. Interval and rank
changes never create diff entries; both sides' payloads are retained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set

from .model import (
    Entity,
    EntityId,
    GroupKey,
    ObjectValue,
    RelationId,
    TimeInterval,
    Triple,
    TripleKey,
    group_key_of,
    triple_from_json,
    triple_to_json,
)
from .preprocess import PreprocessedSnapshot


class Membership(str, Enum):
    OLD_ONLY = "old_only"   # F-
    BOTH = "both"           # F0
    NEW_ONLY = "new_only"   # F+


@dataclass(frozen=True)
class DiffEntry:
    membership: Membership
    old: Optional[Triple] = None
    new: Optional[Triple] = None

    def __post_init__(self) -> None:
        if self.membership is Membership.OLD_ONLY and (self.old is None or self.new is not None):
            raise ValueError("old-only entry must carry exactly the old triple")
        if self.membership is Membership.NEW_ONLY and (self.new is None or self.old is not None):
            raise ValueError("new-only entry must carry exactly the new triple")
        if self.membership is Membership.BOTH and (self.old is None or self.new is None):
            raise ValueError("both-sides entry must carry both triples")

    @property
    def triple(self) -> Triple:
        """The representative triple: the new side when present, else the old.

        Classification reads intervals from the new snapshot for keys present
        on both sides (the new snapshot reflects the most current curation).
        """
        return self.new if self.new is not None else self.old

    @property
    def subject(self) -> EntityId:
        return self.triple.subject

    @property
    def relation(self) -> RelationId:
        return self.triple.relation

    @property
    def object(self) -> ObjectValue:
        return self.triple.object

    @property
    def interval(self) -> TimeInterval:
        return self.triple.interval

    def key(self) -> TripleKey:
        return self.triple.key()


@dataclass
class GroupStats:
    n_minus: int = 0
    n_zero: int = 0
    n_plus: int = 0

    @property
    def n(self) -> int:
        return self.n_minus + self.n_zero + self.n_plus


@dataclass
class DiffResult:
    entries: Dict[TripleKey, DiffEntry] = field(default_factory=dict)
    groups: Dict[GroupKey, List[DiffEntry]] = field(default_factory=dict)
    # entity id -> memberships it occurs in (as subject or entity object)
    occurrences: Dict[str, Set[Membership]] = field(default_factory=dict)

    def add(self, entry: DiffEntry) -> None:
        self.entries[entry.key()] = entry
        self.groups.setdefault(group_key_of(entry.triple), []).append(entry)
        self._note(entry.subject.id, entry.membership)
        if isinstance(entry.object, Entity):
            self._note(entry.object.id.id, entry.membership)

    def _note(self, entity_id: str, membership: Membership) -> None:
        self.occurrences.setdefault(entity_id, set()).add(membership)


def diff_snapshots(old: PreprocessedSnapshot, new: PreprocessedSnapshot) -> DiffResult:
    """Partition all (s, r, o) keys of both snapshots by membership.

    Output ordering is deterministic: groups sorted by (subject, relation),
    entries within a group by object key.
    """
    result = DiffResult()
    keys = sorted(set(old.triples) | set(new.triples))
    for key in keys:
        old_triple = old.triples.get(key)
        new_triple = new.triples.get(key)
        if old_triple is not None and new_triple is not None:
            entry = DiffEntry(Membership.BOTH, old=old_triple, new=new_triple)
        elif old_triple is not None:
            entry = DiffEntry(Membership.OLD_ONLY, old=old_triple)
        else:
            entry = DiffEntry(Membership.NEW_ONLY, new=new_triple)
        result.add(entry)
    return result


def group_stats(entries: Iterable[DiffEntry]) -> GroupStats:
    stats = GroupStats()
    for entry in entries:
        if entry.membership is Membership.OLD_ONLY:
            stats.n_minus += 1
        elif entry.membership is Membership.BOTH:
            stats.n_zero += 1
        else:
            stats.n_plus += 1
    return stats


def entity_occurs_in(entity: EntityId, part: Membership, diff: DiffResult) -> bool:
    """True iff the entity appears as subject or entity object in that part."""
    return part in diff.occurrences.get(entity.id, ())


# --- JSONL serialization (one group per line) ---------------------------------


def group_to_json(key: GroupKey, entries: List[DiffEntry]) -> dict:
    rows = []
    for entry in entries:
        row = {"membership": entry.membership.value}
        if entry.old is not None:
            row["old"] = triple_to_json(entry.old)
        if entry.new is not None:
            row["new"] = triple_to_json(entry.new)
        rows.append(row)
    return {"subject": key.subject.id, "relation": key.relation.id, "entries": rows}


def group_from_json(data: dict) -> List[DiffEntry]:
    entries = []
    for row in data["entries"]:
        old = triple_from_json(row["old"]) if "old" in row else None
        new = triple_from_json(row["new"]) if "new" in row else None
        entries.append(DiffEntry(Membership(row["membership"]), old=old, new=new))
    return entries


def diff_to_groups(diff: DiffResult) -> List[tuple]:
    """Deterministically ordered (GroupKey, entries) pairs."""
    return sorted(diff.groups.items(), key=lambda item: item[0].sort_key())


def diff_from_groups(groups: Iterable[List[DiffEntry]]) -> DiffResult:
    result = DiffResult()
    for entries in groups:
        for entry in entries:
            result.add(entry)
    return result
