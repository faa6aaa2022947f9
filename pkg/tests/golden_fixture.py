"""Deterministic 50-entity snapshot pair for the end-to-end golden test.

The generator is pure: given a directory it always writes byte-identical
snapshot, template, popularity, and config files. The expected pipeline
outputs live in tests/fixtures/golden and were reviewed record by record
when first generated.
"""
from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

from helpers import item, prop, stmt, tf_constraint, write_popularity, write_snapshot

GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"

_PROPERTIES = [
    prop("P6", "head of government", [tf_constraint("P580", "P582")]),
    prop("P1082", "population", [tf_constraint("P585")]),
    prop("P54", "member of sports team"),
    prop("P31", "instance of"),
    prop("P571", "inception"),
    prop("P551", "residence"),
]

_TEMPLATES = [
    {"relation": "P6", "template": "The head of government of SUBJ is OBJ",
     "frequency": 9},
    {"relation": "P6", "template": "SUBJ is led by OBJ", "frequency": 4},
    {"relation": "P1082", "template": "The population of SUBJ is OBJ",
     "frequency": 9},
    {"relation": "P1082", "template": "SUBJ has a population of OBJ",
     "frequency": 4},
    {"relation": "P54", "template": "SUBJ plays for OBJ", "frequency": 9},
    {"relation": "P54", "template": "SUBJ is a member of OBJ", "frequency": 4},
    {"relation": "P31", "template": "SUBJ is an instance of OBJ", "frequency": 9},
    {"relation": "P571", "template": "SUBJ was created on OBJ", "frequency": 9},
]


def _docs() -> Tuple[List[dict], List[dict]]:
    old: List[dict] = list(_PROPERTIES)
    new: List[dict] = list(_PROPERTIES)

    # Label-only targets shared by both snapshots.
    targets = [item("Q900", "country"), item("Q901", "human"),
               item("Q902", "Oldtown"), item("Q903", "Newtown")]
    leaders = [item(f"Q{700 + i}", f"Leader {i}") for i in range(20)]
    clubs = [item(f"Q{800 + i}", f"Club {i}") for i in range(6)]
    for doc in targets + leaders + clubs:
        old.append(doc)
        new.append(doc)

    # Fifteen countries. The first five replace their leader inside the
    # window, the next five gain a new population measurement, the last
    # five stay unchanged and only feed neighbor retrieval.
    for i in range(15):
        qid = f"Q{100 + i}"
        name = f"Country {i}"
        base_claims = {
            "P31": [stmt("wikibase-item", "Q900")],
            "P6": [stmt("wikibase-item", f"Q{700 + i}", rank="preferred",
                        start=f"20{10 + i % 5}-03-01")],
            "P1082": [stmt("quantity", {"amount": str(1_000_000 + i * 7_000),
                                        "unit": None},
                           point="2019-06-01")],
        }
        old.append(item(qid, name, base_claims))
        if i < 5:
            new_claims = dict(base_claims)
            new_claims["P6"] = [
                stmt("wikibase-item", f"Q{700 + i}", rank="normal",
                     start=f"20{10 + i % 5}-03-01", end="2021-09-15"),
                stmt("wikibase-item", f"Q{710 + i}", rank="preferred",
                     start="2021-09-16"),
            ]
            new.append(item(qid, name, new_claims))
        elif i < 10:
            new_claims = dict(base_claims)
            new_claims["P1082"] = base_claims["P1082"] + [
                stmt("quantity", {"amount": str(1_050_000 + i * 7_000),
                                  "unit": None},
                     point="2022-06-01"),
            ]
            new.append(item(qid, name, new_claims))
        else:
            new.append(item(qid, name, base_claims))

    # Ten athletes. Three end a membership inside the window (archive),
    # three add a club on top of the existing one, four stay unchanged.
    for i in range(10):
        qid = f"Q{200 + i}"
        name = f"Athlete {i}"
        base_claims = {
            "P31": [stmt("wikibase-item", "Q901")],
            "P54": [stmt("wikibase-item", f"Q{800 + i % 3}", start="2015-07-01")],
        }
        if i < 6:
            # A residence swap puts the changed athletes into the old-only
            # part of the diff; both sides classify static, so the group
            # itself never reaches the dataset.
            old_claims = dict(base_claims)
            old_claims["P551"] = [stmt("wikibase-item", "Q902")]
            old.append(item(qid, name, old_claims))
        else:
            old.append(item(qid, name, base_claims))
        if i < 3:
            new_claims = {
                "P31": base_claims["P31"],
                "P54": [stmt("wikibase-item", f"Q{800 + i % 3}",
                             start="2015-07-01", end="2022-01-31")],
                "P551": [stmt("wikibase-item", "Q903")],
            }
            new.append(item(qid, name, new_claims))
        elif i < 6:
            new_claims = {
                "P31": base_claims["P31"],
                "P54": base_claims["P54"] + [
                    stmt("wikibase-item", f"Q{803 + i % 3}", start="2022-02-01"),
                ],
                "P551": [stmt("wikibase-item", "Q903")],
            }
            new.append(item(qid, name, new_claims))
        else:
            new.append(item(qid, name, base_claims))

    # Three entities that only exist in the new snapshot, created inside
    # the window.
    for i in range(3):
        new.append(item(f"Q{300 + i}", f"Newcomer {i}", {
            "P31": [stmt("wikibase-item", "Q901")],
            "P571": [stmt("time", f"2022-0{3 + i}-10")],
        }))
    return old, new


def _popularity() -> dict:
    table = {}
    for i in range(15):
        table[f"Q{100 + i}"] = 5_000 - 100 * i
    for i in range(10):
        table[f"Q{200 + i}"] = 900 - 10 * i
    for i in range(3):
        table[f"Q{300 + i}"] = 300 - i
    return table


def write_inputs(base: Path) -> Path:
    """Write snapshots, templates, popularity, and config under base.

    Returns the path of the run config file.
    """
    old_docs, new_docs = _docs()
    write_snapshot(base / "old.jsonl", old_docs)
    write_snapshot(base / "new.jsonl", new_docs)
    with open(base / "templates.jsonl", "w", encoding="utf-8") as handle:
        import json

        for row in _TEMPLATES:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
    write_popularity(base / "popularity.tsv", _popularity())
    config = base / "run.toml"
    config.write_text(
        'old_snapshot = "old.jsonl"\n'
        'new_snapshot = "new.jsonl"\n'
        'templates = "templates.jsonl"\n'
        'popularity = "popularity.tsv"\n'
        'output_dir = "out"\n'
        't_old = "2021-01-04"\n'
        't_new = "2023-02-27"\n'
        'seed = 0\n'
    )
    return config
