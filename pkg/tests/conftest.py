import pytest

from tontine.scenario import ScenarioConfig

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(label: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((label, passed, detail))


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture(scope="session")
def base():
    return ScenarioConfig.baseline(gamma=0.25, b=3.0)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
