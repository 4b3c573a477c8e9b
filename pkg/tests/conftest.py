import pytest

from bcqueue import QueueParameters

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def b1_params():
    """The b = 1 point where the queue is an M/G/1 system with known closed forms."""
    return QueueParameters(arrival_rate=0.3, build_rate=1.0, generate_rate=1.0, max_block_size=1)


@pytest.fixture
def b2_params():
    return QueueParameters(arrival_rate=0.3, build_rate=1.0, generate_rate=2.0, max_block_size=2)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for mark in report.keywords:
        if mark.startswith("criterion_"):
            number = int(mark.split("_", 1)[1])
            previous = ACCEPTANCE_RESULTS.get(number, "passed")
            outcome = report.outcome if previous == "passed" else previous
            ACCEPTANCE_RESULTS[number] = outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        outcome = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if outcome == 'passed' else 'FAIL'}")
