import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import table_fixture_docs, write_snapshot  # noqa: E402

from factdiff.classify import PipelineConfig
from factdiff.ingest import collect_relation_meta, read_snapshot
from factdiff.model import parse_timestamp


@pytest.fixture(scope="session")
def cfg() -> PipelineConfig:
    return PipelineConfig(
        t_old=parse_timestamp("2021-01-04"),
        t_new=parse_timestamp("2023-02-27"),
    )


@pytest.fixture(scope="session")
def table_snapshots(tmp_path_factory):
    """Paths of the six-row fixture snapshot pair."""
    base = tmp_path_factory.mktemp("table-fixture")
    old_docs, new_docs = table_fixture_docs()
    old_path = write_snapshot(base / "old.jsonl", old_docs)
    new_path = write_snapshot(base / "new.jsonl", new_docs)
    return old_path, new_path


@pytest.fixture(scope="session")
def table_meta(table_snapshots):
    old_path, new_path = table_snapshots
    meta = collect_relation_meta(read_snapshot(old_path))
    meta.update(collect_relation_meta(read_snapshot(new_path)))
    return meta
