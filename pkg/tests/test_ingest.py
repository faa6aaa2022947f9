import gzip
import io
import json
from decimal import Decimal

import pytest

from helpers import item, prop, stmt, tf_constraint, write_snapshot

from factdiff.ingest import (
    PopularityTable,
    SchemaError,
    collect_relation_meta,
    entity_doc_to_json,
    load_popularity,
    load_relation_meta,
    parse_entity_doc,
    read_snapshot,
    relation_meta_from_doc,
    temporal_functional,
)
from factdiff.model import Entity, Quantity, SomeValue, TimeValue


class TestEntityDocParsing:
    def test_round_trip(self):
        doc = parse_entity_doc(item("Q30", "USA", {
            "P6": [stmt("wikibase-item", "Q6279", rank="preferred", start="2021-01-20")],
            "P1082": [stmt("quantity", {"amount": "331000000", "unit": None},
                           point="2020-04-01")],
        }))
        assert parse_entity_doc(entity_doc_to_json(doc)) == doc

    def test_statement_payload(self):
        doc = parse_entity_doc(item("Q17", "Japan", {
            "P1082": [stmt("quantity", {"amount": "125960000", "unit": None},
                           point="2020-01-01")],
        }))
        (relation, statements), = doc.claims.items()
        assert relation.id == "P1082"
        assert statements[0].object == Quantity(Decimal("125960000"), None)
        assert isinstance(statements[0].qualifiers["P585"][0], TimeValue)

    def test_somevalue_snaktype(self):
        doc = parse_entity_doc(item("Q1", "x", {
            "P26": [stmt("wikibase-item", None, snaktype="somevalue")],
        }))
        (_, statements), = doc.claims.items()
        assert isinstance(statements[0].object, SomeValue)

    def test_unknown_kind_rejected(self):
        with pytest.raises(Exception):
            parse_entity_doc({"id": "Q1", "kind": "lexeme"})


class TestSnapshotStreaming:
    def test_file_order_preserved(self, tmp_path):
        docs = [item(f"Q{i}", f"e{i}") for i in range(5)]
        path = write_snapshot(tmp_path / "s.jsonl", docs)
        assert [d.id.id for d in read_snapshot(path)] == [f"Q{i}" for i in range(5)]

    def test_gzip_supported(self, tmp_path):
        path = tmp_path / "s.jsonl.gz"
        with gzip.open(path, "wt", encoding="utf-8") as handle:
            handle.write(json.dumps(item("Q1", "one")) + "\n")
        assert [d.id.id for d in read_snapshot(path)] == ["Q1"]

    def test_malformed_line_raises_with_line_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(json.dumps(item("Q1", "one")) + "\n{broken\n")
        with pytest.raises(SchemaError) as err:
            list(read_snapshot(path))
        assert err.value.line_number == 2

    def test_skip_policy_reports_and_continues(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(
            json.dumps(item("Q1", "one")) + "\n{broken\n" + json.dumps(item("Q2", "two")) + "\n")
        errors = []
        ids = [d.id.id for d in read_snapshot(path, on_error="skip", error_sink=errors.append)]
        assert ids == ["Q1", "Q2"]
        assert [e.line_number for e in errors] == [2]

    def test_accepts_open_binary_stream(self):
        payload = (json.dumps(item("Q1", "one")) + "\n").encode("utf-8")
        ids = [d.id.id for d in read_snapshot(io.BytesIO(payload))]
        assert ids == ["Q1"]


class TestRelationMeta:
    def test_temporal_functional_from_constraints(self):
        doc = parse_entity_doc(prop("P6", "head of government",
                                    [tf_constraint("P580", "P582")]))
        assert temporal_functional(doc) == (True, True)

    def test_functional_without_temporal_separators(self):
        doc = parse_entity_doc(prop("P19", "place of birth",
                                    [{"kind": "single_value", "separators": []}]))
        assert temporal_functional(doc) == (True, False)

    def test_unconstrained_property(self):
        doc = parse_entity_doc(prop("P54", "member of sports team"))
        assert temporal_functional(doc) == (False, False)

    def test_meta_flag_carried(self):
        doc = parse_entity_doc(prop("P1647", "subproperty of", is_meta=True))
        assert relation_meta_from_doc(doc).is_meta

    def test_collect_skips_items(self, tmp_path):
        path = write_snapshot(tmp_path / "s.jsonl",
                              [item("Q1", "one"), prop("P6", "hog", [tf_constraint("P580")])])
        meta = collect_relation_meta(read_snapshot(path))
        assert set(meta) == {"P6"}
        assert meta["P6"].is_temporal_functional

    def test_load_relation_meta_enforces_implication(self, tmp_path):
        path = tmp_path / "meta.jsonl"
        path.write_text(json.dumps({"id": "P6", "is_temporal_functional": True,
                                    "is_functional": False}) + "\n")
        with pytest.raises(SchemaError):
            load_relation_meta(path)


class TestPopularity:
    def test_missing_entity_defaults_to_zero(self):
        table = PopularityTable({"Q1": 5})
        assert table["Q404"] == 0

    def test_last_write_wins(self, tmp_path):
        path = tmp_path / "pop.tsv"
        path.write_text("Q1\t5\nQ1\t9\n")
        assert load_popularity(path)["Q1"] == 9

    @pytest.mark.parametrize("line", ["Q1", "Q1\tx", "Q1\t-2", "Q1\t1\t2"])
    def test_malformed_line_raises(self, tmp_path, line):
        path = tmp_path / "pop.tsv"
        path.write_text(line + "\n")
        with pytest.raises(SchemaError):
            load_popularity(path)
