import pytest

from fwgraph.kernels import warmup

# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    warmup()


@pytest.fixture
def record_acceptance():
    def record(number: int, passed: bool, text: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
