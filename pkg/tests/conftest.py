import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parent.parent
DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    state = {}

    def start(number, label):
        state.update(number=number, label=label)

    yield start
    number = state.get("number")
    if number is not None:
        failed = getattr(request.node, "rep_call", None)
        ok = failed is not None and failed.passed
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {state['label']}"
        CRITERIA[number] = line
        print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
