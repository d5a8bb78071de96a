from __future__ import annotations

from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"
SCHEMA_DIR = REPO_ROOT / "schema"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def dump_path() -> Path:
    return FIXTURES / "dump_slice.json.gz"


@pytest.fixture(scope="session")
def malformed_dump_path() -> Path:
    return FIXTURES / "dump_malformed.jsonl"


@pytest.fixture(scope="session")
def relations_path() -> Path:
    return FIXTURES / "relations.csv"


@pytest.fixture(scope="session")
def probe_fixture_path() -> Path:
    return FIXTURES / "mock_probe.json"


@pytest.fixture(scope="session")
def pipeline_config_path() -> Path:
    return FIXTURES / "pipeline.yaml"


@pytest.fixture(scope="session")
def schema_dir() -> Path:
    return SCHEMA_DIR


@pytest.fixture()
def probe_client(probe_fixture_path):
    from driftprobe.bridge import BridgeClient

    return BridgeClient(f"mock:{probe_fixture_path}")
