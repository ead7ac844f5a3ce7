from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import pytest

from jsconform import harness, specdb

FIXTURES = Path(__file__).parent / "fixtures"
MOCK_ENGINE = str(FIXTURES / "mock_engine.py")
STUB_GENERATOR = str(FIXTURES / "stub_generator.py")


def mock_engine_argv(engine_id: str, *extra: str) -> list[str]:
    # -S skips site initialization; the mock only needs bare stdlib
    return ["-S", MOCK_ENGINE, "--id", engine_id, *extra, "{FILE}"]


def write_testbeds(path: Path, engines, modes=("normal",),
                   supported_edition="ES2019") -> Path:
    """Testbed config whose binaries are mock-engine invocations."""
    entries = []
    for engine_id, extra in engines:
        entries.append({
            "engine_id": engine_id,
            "version": "1.0",
            "binary": sys.executable,
            "argv_template": mock_engine_argv(engine_id, *extra),
            "modes": list(modes),
            "supported_edition": supported_edition,
        })
    path.write_text(json.dumps(entries, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def three_mock_testbeds(tmp_path):
    cfg = write_testbeds(tmp_path / "testbeds.json",
                         [("engA", []), ("engB", []), ("engC", [])])
    return harness.load_testbeds(str(cfg))


@pytest.fixture(scope="session")
def substr_db():
    doc = (FIXTURES / "substr.html").read_text(encoding="utf-8")
    return specdb.parse_spec_document(doc)


@pytest.fixture(scope="session")
def tofixed_db():
    doc = (FIXTURES / "tofixed.html").read_text(encoding="utf-8")
    return specdb.parse_spec_document(doc)


@pytest.fixture(scope="session")
def corpus50_db():
    doc = (FIXTURES / "corpus50.html").read_text(encoding="utf-8")
    return specdb.parse_spec_document(doc)


def make_case(case_id: str, source: str):
    """Ad-hoc case object accepted by harness.run_testbed."""

    class _Case:
        def __init__(self):
            self.id = case_id
            self.source = source

    return _Case()


def fast_policy(cap_ms: int = 4000, floor_ms: int = 200) -> harness.TimeoutPolicy:
    return harness.TimeoutPolicy(absolute_cap_ms=cap_ms, min_timeout_ms=floor_ms)


def node_available() -> bool:
    import shutil
    return shutil.which("node") is not None


def require_node():
    if not node_available():
        pytest.skip("node binary not available")
