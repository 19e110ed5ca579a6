import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def catalog_path() -> str:
    return str(FIXTURES / "cyber_catalog.csv")


@pytest.fixture(scope="session")
def pairs_path() -> str:
    return str(FIXTURES / "pairs.jsonl")


@pytest.fixture(scope="session")
def techniques_path() -> str:
    return str(FIXTURES / "techniques.jsonl")


@pytest.fixture(scope="session")
def catalog(catalog_path):
    from attackmapper.catalog import load_catalog

    with open(catalog_path, encoding="utf-8", newline="") as f:
        return load_catalog(f)
