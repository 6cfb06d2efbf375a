from pathlib import Path

import pytest
from hypothesis import settings

from qvfuse.analyzer import AnalyzerConfig
from qvfuse.index import Document, build

settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
PLAIN = AnalyzerConfig(stemmer="none", stopwords=frozenset())


@pytest.fixture
def plain_config():
    return PLAIN


@pytest.fixture
def two_doc_index():
    return build([Document("d1", "apple banana"), Document("d2", "apple")], PLAIN)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
