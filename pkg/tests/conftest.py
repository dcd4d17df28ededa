from pathlib import Path

import pytest

from sfqrank.netlist import load_netlist

DATA = Path(__file__).resolve().parents[1] / "src" / "sfqrank" / "data"
CORPUS = DATA / "iscas85"

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def corpus():
    return [load_netlist(f) for f in sorted(CORPUS.glob("*.v"))]


@pytest.fixture(scope="session")
def c17():
    return load_netlist(DATA / "c17.bench")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
