"""Core domain types shared by every pipeline stage.

Triples carry a validity interval derived from temporal qualifiers.
Timestamps are proleptic Gregorian calendar dates (UTC, day precision);
``NEG_INF``/``POS_INF`` stand in for missing interval bounds.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

# Sentinel bounds for open intervals. date.min/date.max order naturally
# against every real timestamp, so interval rules can use plain comparisons.
NEG_INF: date = date.min
POS_INF: date = date.max

# Qualifier relations that define a statement's validity interval.
START_TIME = "P580"
END_TIME = "P582"
POINT_IN_TIME = "P585"
TEMPORAL_QUALIFIERS = frozenset({START_TIME, END_TIME, POINT_IN_TIME})


class ParseError(ValueError):
    """A value could not be parsed into its domain type."""


_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})")


def parse_timestamp(value: str) -> date:
    """Parse an ISO date or datetime string, truncated to day precision."""
    if not isinstance(value, str):
        raise ParseError(f"expected a timestamp string, got {value!r}")
    m = _DATE_RE.match(value.strip())
    if m is None:
        raise ParseError(f"malformed timestamp {value!r}")
    try:
        return date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError as exc:
        raise ParseError(f"malformed timestamp {value!r}: {exc}") from None


def format_timestamp(value: date) -> Optional[str]:
    """Inverse of parse_timestamp; open bounds serialize as None."""
    if value in (NEG_INF, POS_INF):
        return None
    return value.isoformat()


@dataclass(frozen=True, slots=True)
class EntityId:
    """Opaque entity identifier; equality and hashing are by id only."""

    id: str
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")


@dataclass(frozen=True, slots=True)
class RelationId:
    """Opaque relation identifier; equality by id only."""

    id: str
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("relation id must be non-empty")


# --- Object values -----------------------------------------------------------
#
# A tagged union. Url, ExternalId, GlobeCoordinate, SomeValue and NoValue only
# exist so ingestion can represent and then reject them; none survive
# preprocessing. Equality is exact structural equality per variant (Decimal
# amounts compare exactly, never by float proximity).


@dataclass(frozen=True, slots=True)
class Entity:
    id: EntityId


@dataclass(frozen=True, slots=True)
class Quantity:
    amount: Decimal
    unit: Optional[str] = None


@dataclass(frozen=True, slots=True)
class TimeValue:
    value: date


@dataclass(frozen=True, slots=True)
class Text:
    value: str


@dataclass(frozen=True, slots=True)
class MonolingualText:
    text: str
    language: str


@dataclass(frozen=True, slots=True)
class Url:
    value: str


@dataclass(frozen=True, slots=True)
class ExternalId:
    value: str


@dataclass(frozen=True, slots=True)
class GlobeCoordinate:
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class SomeValue:
    pass


@dataclass(frozen=True, slots=True)
class NoValue:
    pass


ObjectValue = Union[
    Entity,
    Quantity,
    TimeValue,
    Text,
    MonolingualText,
    Url,
    ExternalId,
    GlobeCoordinate,
    SomeValue,
    NoValue,
]


def parse_quantity(amount: str, unit: Optional[str] = None) -> Quantity:
    try:
        return Quantity(Decimal(str(amount)), unit)
    except InvalidOperation:
        raise ParseError(f"malformed quantity amount {amount!r}") from None


def object_key(obj: ObjectValue) -> str:
    """Canonical string form of an object value.

    Used as the object component of triple identity keys and as the
    deterministic tie-break ordering on objects.
    """
    if isinstance(obj, Entity):
        return f"entity:{obj.id.id}"
    if isinstance(obj, Quantity):
        unit = obj.unit or ""
        return f"quantity:{obj.amount}:{unit}"
    if isinstance(obj, TimeValue):
        return f"time:{obj.value.isoformat()}"
    if isinstance(obj, Text):
        return f"text:{obj.value}"
    if isinstance(obj, MonolingualText):
        return f"monolingual:{obj.language}:{obj.text}"
    if isinstance(obj, Url):
        return f"url:{obj.value}"
    if isinstance(obj, ExternalId):
        return f"externalid:{obj.value}"
    if isinstance(obj, GlobeCoordinate):
        return f"coordinate:{obj.lat!r}:{obj.lon!r}"
    if isinstance(obj, SomeValue):
        return "somevalue"
    if isinstance(obj, NoValue):
        return "novalue"
    raise TypeError(f"not an object value: {obj!r}")


_MONTHS = [
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
]


def object_display(obj: ObjectValue, labels: Optional[Mapping[str, str]] = None) -> str:
    """Human-readable rendering of an object value for verbalization.

    Entities render as their label (falling back to the raw id); dates as
    "30 November 2022"; quantities in their exact decimal form with the
    unit label appended when one is known.
    """
    labels = labels or {}
    if isinstance(obj, Entity):
        return obj.id.label or labels.get(obj.id.id) or obj.id.id
    if isinstance(obj, Quantity):
        text = str(obj.amount)
        if obj.unit:
            unit_label = labels.get(obj.unit, obj.unit)
            text = f"{text} {unit_label}"
        return text
    if isinstance(obj, TimeValue):
        d = obj.value
        return f"{d.day} {_MONTHS[d.month - 1]} {d.year}"
    if isinstance(obj, Text):
        return obj.value
    if isinstance(obj, MonolingualText):
        return obj.text
    raise ValueError(f"object has no displayable form: {obj!r}")


# --- Intervals and triples ---------------------------------------------------


@dataclass(frozen=True, slots=True)
class TimeInterval:
    """Validity interval [start, end]; missing bounds are NEG_INF/POS_INF."""

    start: date = NEG_INF
    end: date = POS_INF

    @property
    def inverted(self) -> bool:
        # Classification maps inverted intervals to 'unknown'; they are
        # representable on purpose rather than rejected at construction.
        return self.start > self.end


ALWAYS = TimeInterval()

Rank = str
RANKS = ("preferred", "normal", "deprecated")

QualifierMap = Mapping[str, Sequence[ObjectValue]]


def _single_time(qualifiers: QualifierMap, relation: str) -> Optional[date]:
    values = qualifiers.get(relation)
    if not values:
        return None
    value = values[0]
    if not isinstance(value, TimeValue):
        raise ParseError(f"qualifier {relation} does not hold a time value: {value!r}")
    return value.value


def interval_from_qualifiers(qualifiers: QualifierMap) -> TimeInterval:
    """Derive a validity interval from start/end/point-in-time qualifiers.

    start-time and end-time map to the interval bounds; a point in time t
    (with no start/end present) yields [t, POS_INF]. When both forms are
    present, start/end win and point in time is ignored.
    """
    start = _single_time(qualifiers, START_TIME)
    end = _single_time(qualifiers, END_TIME)
    if start is None and end is None:
        point = _single_time(qualifiers, POINT_IN_TIME)
        if point is not None:
            return TimeInterval(point, POS_INF)
        return ALWAYS
    return TimeInterval(start if start is not None else NEG_INF,
                        end if end is not None else POS_INF)


def point_in_time_of(qualifiers: QualifierMap) -> Optional[date]:
    """The point-in-time value, when it alone defines the interval."""
    if qualifiers.get(START_TIME) or qualifiers.get(END_TIME):
        return None
    return _single_time(qualifiers, POINT_IN_TIME)


@dataclass(frozen=True, slots=True)
class Statement:
    """A claim as it appears in a snapshot document."""

    relation: RelationId
    object: ObjectValue
    rank: Rank = "normal"
    qualifiers: Mapping[str, Sequence[ObjectValue]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rank not in RANKS:
            raise ValueError(f"invalid rank {self.rank!r}")


TripleKey = tuple  # (subject id, relation id, object key)


@dataclass(frozen=True, slots=True)
class Triple:
    """A (subject, relation, object) fact with its validity interval.

    The identity key for diffing is (subject, relation, object) only;
    interval, rank, and point_in_time are payload. point_in_time is set
    when the interval was derived from a lone point-in-time qualifier.
    """

    subject: EntityId
    relation: RelationId
    object: ObjectValue
    interval: TimeInterval = ALWAYS
    rank: Rank = "normal"
    point_in_time: Optional[date] = None

    def key(self) -> TripleKey:
        return (self.subject.id, self.relation.id, object_key(self.object))


@dataclass(frozen=True, slots=True)
class GroupKey:
    """All triples in an (s, r)-group share this key."""

    subject: EntityId
    relation: RelationId

    def sort_key(self) -> tuple:
        return (self.subject.id, self.relation.id)


def group_key_of(triple: Triple) -> GroupKey:
    return GroupKey(triple.subject, triple.relation)


class Label(str, Enum):
    NEW = "new"
    OBSOLETE = "obsolete"
    STATIC = "static"
    IGNORE = "ignore"
    UNKNOWN = "unknown"


class Scenario(str, Enum):
    REPLACE_OBJECT = "ReplaceObject"
    ARCHIVE = "Archive"
    ADD_OBJECT = "AddObject"
    ADD_RELATION = "AddRelation"
    ADD_ENTITY = "AddEntity"
    OTHER = "Other"


# --- JSON (de)serialization of object values and triples ---------------------


def object_to_json(obj: ObjectValue) -> dict:
    if isinstance(obj, Entity):
        out = {"type": "entity", "id": obj.id.id}
        if obj.id.label is not None:
            out["label"] = obj.id.label
        return out
    if isinstance(obj, Quantity):
        return {"type": "quantity", "amount": str(obj.amount), "unit": obj.unit}
    if isinstance(obj, TimeValue):
        return {"type": "time", "value": obj.value.isoformat()}
    if isinstance(obj, Text):
        return {"type": "string", "value": obj.value}
    if isinstance(obj, MonolingualText):
        return {"type": "monolingualtext", "text": obj.text, "language": obj.language}
    if isinstance(obj, Url):
        return {"type": "url", "value": obj.value}
    if isinstance(obj, ExternalId):
        return {"type": "external-id", "value": obj.value}
    if isinstance(obj, GlobeCoordinate):
        return {"type": "globe-coordinate", "lat": obj.lat, "lon": obj.lon}
    if isinstance(obj, SomeValue):
        return {"type": "somevalue"}
    if isinstance(obj, NoValue):
        return {"type": "novalue"}
    raise TypeError(f"not an object value: {obj!r}")


def object_from_json(data: dict) -> ObjectValue:
    kind = data.get("type")
    if kind == "entity":
        return Entity(EntityId(data["id"], data.get("label")))
    if kind == "quantity":
        return parse_quantity(data["amount"], data.get("unit"))
    if kind == "time":
        return TimeValue(parse_timestamp(data["value"]))
    if kind == "string":
        return Text(data["value"])
    if kind == "monolingualtext":
        return MonolingualText(data["text"], data["language"])
    if kind == "url":
        return Url(data["value"])
    if kind == "external-id":
        return ExternalId(data["value"])
    if kind == "globe-coordinate":
        return GlobeCoordinate(float(data["lat"]), float(data["lon"]))
    if kind == "somevalue":
        return SomeValue()
    if kind == "novalue":
        return NoValue()
    raise ParseError(f"unknown object value type {kind!r}")


def interval_to_json(interval: TimeInterval) -> dict:
    return {"start": format_timestamp(interval.start), "end": format_timestamp(interval.end)}


def interval_from_json(data: dict) -> TimeInterval:
    start = data.get("start")
    end = data.get("end")
    return TimeInterval(parse_timestamp(start) if start else NEG_INF,
                        parse_timestamp(end) if end else POS_INF)


def triple_to_json(triple: Triple) -> dict:
    out = {
        "subject": triple.subject.id,
        "relation": triple.relation.id,
        "object": object_to_json(triple.object),
        "interval": interval_to_json(triple.interval),
        "rank": triple.rank,
    }
    if triple.subject.label is not None:
        out["subject_label"] = triple.subject.label
    if triple.relation.label is not None:
        out["relation_label"] = triple.relation.label
    if triple.point_in_time is not None:
        out["point_in_time"] = triple.point_in_time.isoformat()
    return out


def triple_from_json(data: dict) -> Triple:
    point = data.get("point_in_time")
    return Triple(
        subject=EntityId(data["subject"], data.get("subject_label")),
        relation=RelationId(data["relation"], data.get("relation_label")),
        object=object_from_json(data["object"]),
        interval=interval_from_json(data.get("interval", {})),
        rank=data.get("rank", "normal"),
        point_in_time=parse_timestamp(point) if point else None,
    )
