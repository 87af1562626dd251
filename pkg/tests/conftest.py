import pytest

from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, echoed after the run
CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    def report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        CRITERIA[number] = line
        with capsys.disabled():
            print(f"\n{line}")
    return report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
