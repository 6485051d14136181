from pathlib import Path

import pytest

from testab.minilang import parse_file

ROOT = Path(__file__).resolve().parent.parent
SAMPLE = ROOT / "src" / "testab" / "data" / "sampleprog.ml"
DEMO = ROOT / "corpus" / "demo"
FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def sample():
    return parse_file(SAMPLE)


@pytest.fixture(scope="session")
def demo_programs():
    return [parse_file(p) for p in sorted((DEMO / "src").glob("*.ml"))]


# acceptance criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")
