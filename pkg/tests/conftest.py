import pytest

from graphtools import MINIMAL_ENTRIES, MINIMAL_TRIPLES, case_graph, jsonl

from pathseeker.store import load_graph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def minimal_graph():
    return load_graph(jsonl(*MINIMAL_ENTRIES), jsonl(*MINIMAL_TRIPLES))


@pytest.fixture(scope="session")
def case():
    return case_graph()
