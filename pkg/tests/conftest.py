import pytest

from coexdcf.params import scenario_from_mapping


@pytest.fixture(scope="session")
def base():
    """N_p=6, N_s=15, t=50 us sensing scenario of the default preset."""
    return scenario_from_mapping({})


def scenario(**overrides):
    return scenario_from_mapping(overrides)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
