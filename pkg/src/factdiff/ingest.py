"""Streaming reader for snapshot dumps and side-channel metadata.

A snapshot is JSON-lines, one entity document per line (UTF-8, optionally
gzip-compressed). The reader yields documents in file order and holds at
most one document in memory at a time.
"""
from __future__ import annotations

import gzip
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Union

from .model import (
    Entity,
    EntityId,
    ExternalId,
    GlobeCoordinate,
    MonolingualText,
    NoValue,
    ObjectValue,
    ParseError,
    Quantity,
    RelationId,
    SomeValue,
    Statement,
    Text,
    TimeValue,
    Url,
    object_to_json,
    parse_quantity,
    parse_timestamp,
)

logger = logging.getLogger(__name__)

PAGE_KINDS = ("article", "list", "category", "template", "disambiguation", "article_section")
CONSTRAINT_KINDS = ("single_value", "single_best_value", "other")


class SchemaError(ValueError):
    """A dump line or metadata line violates the published schema."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


@dataclass(frozen=True)
class Sitelink:
    exists: bool = False
    page_kind: Optional[str] = None


@dataclass(frozen=True)
class Constraint:
    kind: str
    separators: tuple = ()


@dataclass(frozen=True)
class PropertyMeta:
    is_meta: bool = False
    is_restrictive_qualifier: bool = False
    constraints: tuple = ()


@dataclass(frozen=True)
class EntityDoc:
    id: EntityId
    kind: str  # "item" | "property"
    sitelink: Sitelink = Sitelink()
    claims: Dict[RelationId, tuple] = field(default_factory=dict)
    property_meta: Optional[PropertyMeta] = None


@dataclass(frozen=True)
class RelationMeta:
    id: RelationId
    is_meta: bool = False
    is_functional: bool = False
    is_temporal_functional: bool = False
    is_restrictive_qualifier: bool = False
    datatype: Optional[str] = None

    def __post_init__(self) -> None:
        if self.is_temporal_functional and not self.is_functional:
            raise ValueError("is_temporal_functional implies is_functional")


class PopularityTable(dict):
    """Entity id -> view count; missing entities default to popularity 0."""

    def __missing__(self, key: str) -> int:
        return 0


# --- Object value parsing -----------------------------------------------------


def parse_object_value(datatype: str, value, snaktype: str = "value") -> ObjectValue:
    if snaktype == "somevalue":
        return SomeValue()
    if snaktype == "novalue":
        return NoValue()
    if snaktype != "value":
        raise ParseError(f"unknown snaktype {snaktype!r}")
    if datatype == "wikibase-item":
        if isinstance(value, dict):
            return Entity(EntityId(value["id"], value.get("label")))
        return Entity(EntityId(value))
    if datatype == "quantity":
        if isinstance(value, dict):
            return parse_quantity(value["amount"], value.get("unit"))
        return parse_quantity(value)
    if datatype == "time":
        return TimeValue(parse_timestamp(value))
    if datatype == "string":
        return Text(value)
    if datatype == "monolingualtext":
        return MonolingualText(value["text"], value["language"])
    if datatype == "url":
        return Url(value)
    if datatype == "external-id":
        return ExternalId(value)
    if datatype == "globe-coordinate":
        return GlobeCoordinate(float(value["lat"]), float(value["lon"]))
    raise ParseError(f"unknown datatype {datatype!r}")


def object_value_to_wire(obj: ObjectValue) -> tuple:
    """(datatype, value, snaktype) triple for serializing a statement."""
    if isinstance(obj, Entity):
        value: object = obj.id.id
        if obj.id.label is not None:
            value = {"id": obj.id.id, "label": obj.id.label}
        return "wikibase-item", value, "value"
    if isinstance(obj, Quantity):
        return "quantity", {"amount": str(obj.amount), "unit": obj.unit}, "value"
    if isinstance(obj, TimeValue):
        return "time", obj.value.isoformat(), "value"
    if isinstance(obj, Text):
        return "string", obj.value, "value"
    if isinstance(obj, MonolingualText):
        return "monolingualtext", {"text": obj.text, "language": obj.language}, "value"
    if isinstance(obj, Url):
        return "url", obj.value, "value"
    if isinstance(obj, ExternalId):
        return "external-id", obj.value, "value"
    if isinstance(obj, GlobeCoordinate):
        return "globe-coordinate", {"lat": obj.lat, "lon": obj.lon}, "value"
    if isinstance(obj, SomeValue):
        return "string", None, "somevalue"
    if isinstance(obj, NoValue):
        return "string", None, "novalue"
    raise TypeError(f"not an object value: {obj!r}")


def _parse_qualifiers(raw: dict) -> Dict[str, tuple]:
    qualifiers: Dict[str, tuple] = {}
    for pid, snaks in raw.items():
        values = []
        for snak in snaks:
            values.append(parse_object_value(snak["datatype"], snak.get("value"),
                                             snak.get("snaktype", "value")))
        qualifiers[pid] = tuple(values)
    return qualifiers


def _parse_statement(relation_id: str, raw: dict) -> Statement:
    obj = parse_object_value(raw["datatype"], raw.get("value"), raw.get("snaktype", "value"))
    return Statement(
        relation=RelationId(relation_id, raw.get("relation_label")),
        object=obj,
        rank=raw.get("rank", "normal"),
        qualifiers=_parse_qualifiers(raw.get("qualifiers", {})),
    )


def parse_entity_doc(data: dict) -> EntityDoc:
    kind = data.get("kind", "item")
    if kind not in ("item", "property"):
        raise ParseError(f"unknown entity kind {kind!r}")
    sitelink_raw = data.get("sitelink", {})
    sitelink = Sitelink(bool(sitelink_raw.get("exists", False)), sitelink_raw.get("page_kind"))
    claims: Dict[RelationId, tuple] = {}
    for pid, statements in data.get("claims", {}).items():
        parsed = tuple(_parse_statement(pid, raw) for raw in statements)
        claims[RelationId(pid, parsed[0].relation.label if parsed else None)] = parsed
    property_meta = None
    if "property_meta" in data:
        raw = data["property_meta"]
        constraints = tuple(
            Constraint(c["kind"], tuple(c.get("separators", ()))) for c in raw.get("constraints", ())
        )
        property_meta = PropertyMeta(
            is_meta=bool(raw.get("is_meta", False)),
            is_restrictive_qualifier=bool(raw.get("is_restrictive_qualifier", False)),
            constraints=constraints,
        )
    return EntityDoc(
        id=EntityId(data["id"], data.get("label")),
        kind=kind,
        sitelink=sitelink,
        claims=claims,
        property_meta=property_meta,
    )


def entity_doc_to_json(doc: EntityDoc) -> dict:
    claims = {}
    for relation, statements in doc.claims.items():
        rows = []
        for stmt in statements:
            datatype, value, snaktype = object_value_to_wire(stmt.object)
            row = {"rank": stmt.rank, "snaktype": snaktype, "datatype": datatype, "value": value}
            if stmt.relation.label is not None:
                row["relation_label"] = stmt.relation.label
            if stmt.qualifiers:
                row["qualifiers"] = {
                    pid: [dict(zip(("datatype", "value", "snaktype"), object_value_to_wire(v)))
                          for v in values]
                    for pid, values in stmt.qualifiers.items()
                }
            rows.append(row)
        claims[relation.id] = rows
    out = {
        "id": doc.id.id,
        "kind": doc.kind,
        "sitelink": {"exists": doc.sitelink.exists, "page_kind": doc.sitelink.page_kind},
        "claims": claims,
    }
    if doc.id.label is not None:
        out["label"] = doc.id.label
    if doc.property_meta is not None:
        out["property_meta"] = {
            "is_meta": doc.property_meta.is_meta,
            "is_restrictive_qualifier": doc.property_meta.is_restrictive_qualifier,
            "constraints": [
                {"kind": c.kind, "separators": list(c.separators)}
                for c in doc.property_meta.constraints
            ],
        }
    return out


# --- Snapshot streaming -------------------------------------------------------


def _open_text(source: Union[str, Path, io.IOBase]) -> io.TextIOBase:
    if isinstance(source, io.IOBase):
        if isinstance(source, io.TextIOBase):
            return source
        return io.TextIOWrapper(source, encoding="utf-8")
    path = Path(source)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def read_snapshot(
    source: Union[str, Path, io.IOBase],
    on_error: str = "raise",
    error_sink: Optional[Callable[[SchemaError], None]] = None,
) -> Iterator[EntityDoc]:
    """Stream entity documents from a JSON-lines snapshot.

    on_error="raise" aborts at the first malformed line; on_error="skip"
    reports it (to error_sink, or the module logger) and continues.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError(f"unknown error policy {on_error!r}")
    stream = _open_text(source)
    try:
        for line_number, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield parse_entity_doc(json.loads(line))
            except (json.JSONDecodeError, ParseError, KeyError, TypeError, ValueError) as exc:
                error = SchemaError(line_number, str(exc))
                if on_error == "raise":
                    raise error from None
                if error_sink is not None:
                    error_sink(error)
                else:
                    logger.warning("skipping malformed snapshot line: %s", error)
    finally:
        stream.close()


# --- Relation metadata --------------------------------------------------------


def temporal_functional(doc: EntityDoc) -> tuple:
    """(is_functional, is_temporal_functional) for a property document.

    A property is functional when it carries a single-value or
    single-best-value constraint, and temporal functional when that
    constraint's separators include start-time, end-time or point-in-time.
    """
    if doc.kind != "property":
        raise ValueError(f"{doc.id.id} is not a property document")
    if doc.property_meta is None:
        return False, False
    temporal_separators = {"P580", "P582", "P585"}
    is_functional = False
    is_temporal = False
    for constraint in doc.property_meta.constraints:
        if constraint.kind in ("single_value", "single_best_value"):
            is_functional = True
            if temporal_separators & set(constraint.separators):
                is_temporal = True
    return is_functional, is_temporal


def relation_meta_from_doc(doc: EntityDoc) -> RelationMeta:
    is_functional, is_temporal = temporal_functional(doc)
    meta = doc.property_meta or PropertyMeta()
    return RelationMeta(
        id=RelationId(doc.id.id, doc.id.label),
        is_meta=meta.is_meta,
        is_functional=is_functional,
        is_temporal_functional=is_temporal,
        is_restrictive_qualifier=meta.is_restrictive_qualifier,
    )


def load_relation_meta(path: Union[str, Path]) -> Dict[str, RelationMeta]:
    """Load relation metadata from a JSONL file, keyed by relation id."""
    table: Dict[str, RelationMeta] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                meta = RelationMeta(
                    id=RelationId(data["id"], data.get("label")),
                    is_meta=bool(data.get("is_meta", False)),
                    is_functional=bool(data.get("is_functional", False)),
                    is_temporal_functional=bool(data.get("is_temporal_functional", False)),
                    is_restrictive_qualifier=bool(data.get("is_restrictive_qualifier", False)),
                    datatype=data.get("datatype"),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise SchemaError(line_number, str(exc)) from None
            table[meta.id.id] = meta
    return table


def collect_relation_meta(docs: Iterable[EntityDoc]) -> Dict[str, RelationMeta]:
    """Derive relation metadata from the property documents of a snapshot."""
    table: Dict[str, RelationMeta] = {}
    for doc in docs:
        if doc.kind != "property":
            continue
        table[doc.id.id] = relation_meta_from_doc(doc)
    return table


def load_popularity(path: Union[str, Path]) -> PopularityTable:
    """Load a tab-separated (entity id, view count) file.

    Duplicate ids are last-write-wins; malformed lines raise SchemaError.
    """
    table = PopularityTable()
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise SchemaError(line_number, f"expected 2 tab-separated fields, got {len(parts)}")
            entity_id, raw_count = parts
            try:
                count = int(raw_count)
            except ValueError:
                raise SchemaError(line_number, f"malformed count {raw_count!r}") from None
            if count < 0:
                raise SchemaError(line_number, f"negative count {count}")
            table[entity_id] = count
    return table
