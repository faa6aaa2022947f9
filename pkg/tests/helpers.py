"""Shared builders for snapshot fixtures used across the test suite."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple


def stmt(datatype: str, value, rank: str = "normal", snaktype: str = "value",
         start: Optional[str] = None, end: Optional[str] = None,
         point: Optional[str] = None, qualifiers: Optional[dict] = None) -> dict:
    row = {"datatype": datatype, "value": value, "rank": rank, "snaktype": snaktype}
    quals = dict(qualifiers or {})
    if start:
        quals["P580"] = [{"datatype": "time", "value": start}]
    if end:
        quals["P582"] = [{"datatype": "time", "value": end}]
    if point:
        quals["P585"] = [{"datatype": "time", "value": point}]
    if quals:
        row["qualifiers"] = quals
    return row


def item(entity_id: str, label: str, claims: Optional[Dict[str, List[dict]]] = None,
         page_kind: Optional[str] = "article", sitelink: bool = True) -> dict:
    return {
        "id": entity_id,
        "label": label,
        "kind": "item",
        "sitelink": {"exists": sitelink, "page_kind": page_kind if sitelink else None},
        "claims": claims or {},
    }


def prop(property_id: str, label: str, constraints: Optional[List[dict]] = None,
         is_meta: bool = False, is_restrictive_qualifier: bool = False) -> dict:
    return {
        "id": property_id,
        "label": label,
        "kind": "property",
        "sitelink": {"exists": False, "page_kind": None},
        "claims": {},
        "property_meta": {
            "is_meta": is_meta,
            "is_restrictive_qualifier": is_restrictive_qualifier,
            "constraints": constraints or [],
        },
    }


def tf_constraint(*separators: str) -> dict:
    return {"kind": "single_best_value", "separators": list(separators)}


def write_snapshot(path: Path, docs: List[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(json.dumps(doc, sort_keys=True) + "\n")
    return path


# --- Six-row classification fixture -------------------------------------------------
#
# Encodes the canonical examples: a population replacement (point-in-time
# dedup), a footballer's team change (static + obsolete + new mix), two
# head-of-something replacements (preferred-rank dedup), and a brand-new
# entity whose every triple is labeled new.

PROPERTIES = [
    prop("P1082", "population", [tf_constraint("P585")]),
    prop("P54", "member of sports team"),
    prop("P6", "head of government", [tf_constraint("P580", "P582")]),
    prop("P6087", "coach of sports team", [tf_constraint("P580")]),
    prop("P31", "instance of"),
    prop("P571", "inception"),
    prop("P551", "residence"),
]

_COMMON_ITEMS = [
    item("Q17", "Japan"),
    item("Q30", "USA"),
    item("Q11571", "Cristiano Ronaldo"),
    item("Q4091976", "Vyacheslav Geraschenko"),
    item("Q22686", "Donald Trump"),
    item("Q6279", "Joe Biden"),
    item("Q76", "Barack Obama"),
    item("Q1422", "Juventus F.C."),
    item("Q438897", "Portugal national association football team"),
    item("Q331380", "Al-Nassr FC"),
    item("Q2338924", "FC Smorgon"),
    item("Q1770418", "FC Dnepr Mogilev"),
    item("Q495", "Turin"),
    item("Q3692", "Riyadh"),
    item("Q17155032", "language model"),
    item("Q1068259", "chatbot"),
    item("Q3164206", "Jean Castex"),
    item("Q567", "Angela Merkel"),
    item("Q180589", "Boris Johnson"),
    item("Q6256", "country"),
    item("Q5", "human"),
    item("Q483020", "Paris Saint-Germain F.C."),
    item("Q1060707", "FC Torpedo Moscow"),
    # Stable background facts, identical in both snapshots. They classify
    # static (and are dropped from the dataset), but they give every
    # changed group same-relation candidates for neighbor retrieval.
    item("Q142", "France", {
        "P31": [stmt("wikibase-item", "Q6256")],
        "P6": [stmt("wikibase-item", "Q3164206", start="2020-07-03")],
        "P1082": [stmt("quantity", {"amount": "67000000", "unit": None},
                       point="2020-01-01")],
    }),
    item("Q183", "Germany", {
        "P31": [stmt("wikibase-item", "Q6256")],
        "P6": [stmt("wikibase-item", "Q567", start="2005-11-22")],
        "P1082": [stmt("quantity", {"amount": "83000000", "unit": None},
                       point="2019-12-31")],
    }),
    item("Q145", "United Kingdom", {
        "P31": [stmt("wikibase-item", "Q6256")],
        "P6": [stmt("wikibase-item", "Q180589", start="2019-07-24")],
    }),
    item("Q615", "Lionel Messi", {
        "P31": [stmt("wikibase-item", "Q5")],
        "P54": [stmt("wikibase-item", "Q483020", start="2020-08-10")],
    }),
    item("Q4231352", "Oleg Kononov", {
        "P31": [stmt("wikibase-item", "Q5")],
        "P6087": [stmt("wikibase-item", "Q1060707", rank="preferred",
                       start="2017-06-01")],
    }),
    item("Q91", "GPT-2", {
        "P31": [stmt("wikibase-item", "Q17155032")],
        "P571": [stmt("time", "2019-02-14")],
    }),
]


def table_fixture_docs() -> Tuple[List[dict], List[dict]]:
    """(old snapshot docs, new snapshot docs) for the six-row fixture."""
    old_docs = list(PROPERTIES) + [dict(d) for d in _COMMON_ITEMS]
    new_docs = list(PROPERTIES) + [dict(d) for d in _COMMON_ITEMS]

    def claims_of(docs: List[dict], entity_id: str) -> dict:
        for doc in docs:
            if doc["id"] == entity_id:
                doc = dict(doc)
                return doc.setdefault("claims", {})
        raise KeyError(entity_id)

    def set_claims(docs: List[dict], entity_id: str, claims: dict) -> None:
        for index, doc in enumerate(docs):
            if doc["id"] == entity_id:
                docs[index] = dict(doc, claims=claims)
                return
        raise KeyError(entity_id)

    # Japan's population: the old snapshot carries two point-in-time
    # measurements (dedup keeps the later), the new snapshot adds a third.
    japan_p31 = {"P31": [stmt("wikibase-item", "Q6256")]}
    set_claims(old_docs, "Q17", {**japan_p31, "P1082": [
        stmt("quantity", {"amount": "126500000", "unit": None}, point="2015-01-01"),
        stmt("quantity", {"amount": "125960000", "unit": None}, point="2020-01-01"),
    ]})
    set_claims(new_docs, "Q17", {**japan_p31, "P1082": [
        stmt("quantity", {"amount": "125960000", "unit": None}, point="2020-01-01"),
        stmt("quantity", {"amount": "125440000", "unit": None}, point="2022-06-01"),
    ]})

    # Ronaldo: national team membership persists, the club membership ends
    # inside the window and a new club starts. The residence move supplies
    # an old-only occurrence for the subject without affecting the output
    # (both sides classify static, so the group is dropped).
    set_claims(old_docs, "Q11571", {
        "P31": [stmt("wikibase-item", "Q5")],
        "P54": [
            stmt("wikibase-item", "Q438897", start="2003-08-20"),
            stmt("wikibase-item", "Q1422", start="2018-07-10"),
        ],
        "P551": [stmt("wikibase-item", "Q495")],
    })
    set_claims(new_docs, "Q11571", {
        "P31": [stmt("wikibase-item", "Q5")],
        "P54": [
            stmt("wikibase-item", "Q438897", start="2003-08-20"),
            stmt("wikibase-item", "Q1422", start="2018-07-10", end="2022-11-22"),
            stmt("wikibase-item", "Q331380", start="2023-01-01"),
        ],
        "P551": [stmt("wikibase-item", "Q3692")],
    })

    # USA's head of government: preferred-rank dedup keeps exactly one
    # triple per snapshot, so the diff is a clean replacement pair.
    usa_p31 = {"P31": [stmt("wikibase-item", "Q6256")]}
    set_claims(old_docs, "Q30", {**usa_p31, "P6": [
        stmt("wikibase-item", "Q76", rank="normal", start="2009-01-20", end="2017-01-20"),
        stmt("wikibase-item", "Q22686", rank="preferred", start="2017-01-20"),
    ]})
    set_claims(new_docs, "Q30", {**usa_p31, "P6": [
        stmt("wikibase-item", "Q76", rank="normal", start="2009-01-20", end="2017-01-20"),
        stmt("wikibase-item", "Q22686", rank="normal", start="2017-01-20", end="2021-01-20"),
        stmt("wikibase-item", "Q6279", rank="preferred", start="2021-01-20"),
    ]})

    # Coach replacement, same mechanics as the head-of-government pair.
    coach_p31 = {"P31": [stmt("wikibase-item", "Q5")]}
    set_claims(old_docs, "Q4091976", {**coach_p31, "P6087": [
        stmt("wikibase-item", "Q2338924", rank="preferred", start="2019-06-01"),
    ]})
    set_claims(new_docs, "Q4091976", {**coach_p31, "P6087": [
        stmt("wikibase-item", "Q2338924", rank="normal", start="2019-06-01", end="2021-05-30"),
        stmt("wikibase-item", "Q1770418", rank="preferred", start="2021-06-01"),
    ]})

    # A brand-new entity: present only in the new snapshot, with an
    # inception date inside the window, so every triple is labeled new.
    new_docs.append(item("Q115564437", "ChatGPT", {
        "P31": [
            stmt("wikibase-item", "Q17155032"),
            stmt("wikibase-item", "Q1068259"),
        ],
        "P571": [stmt("time", "2022-11-30")],
    }))
    return old_docs, new_docs


TABLE_FIXTURE_POPULARITY = {
    "Q30": 9000,
    "Q17": 8000,
    "Q11571": 7000,
    "Q115564437": 500,
    "Q4091976": 40,
}


def write_popularity(path: Path, table: dict) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for entity_id, count in table.items():
            handle.write(f"{entity_id}\t{count}\n")
    return path
