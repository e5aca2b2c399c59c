from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def news_path() -> Path:
    return REPO_ROOT / "data" / "sample_news.jsonl"


@pytest.fixture(scope="session")
def example_config_path() -> Path:
    return REPO_ROOT / "config.example.yaml"
