import json
from pathlib import Path

import pytest

from polarlens.corpus import load_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def sample_corpus():
    return load_corpus(FIXTURES / "sample_corpus.jsonl")


def read_jsonl(path):
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
