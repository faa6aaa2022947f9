import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tinymodel import build_model_dir, train_copy_model  # noqa: E402

from modelprobe import ProbeSession  # noqa: E402


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> Path:
    """An untrained tiny model; enough for shape and conformance checks."""
    return build_model_dir(tmp_path_factory.mktemp("model") / "untrained")


@pytest.fixture(scope="session")
def trained_model_dir(tmp_path_factory) -> Path:
    """A tiny model trained to copy facts stated earlier in the prompt."""
    path = build_model_dir(tmp_path_factory.mktemp("model") / "trained")
    return train_copy_model(path, steps=300)


@pytest.fixture(scope="session")
def session(model_dir) -> ProbeSession:
    return ProbeSession(str(model_dir)).load()


@pytest.fixture(scope="session")
def trained_session(trained_model_dir) -> ProbeSession:
    return ProbeSession(str(trained_model_dir)).load()
