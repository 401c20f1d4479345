import pytest

from tsorobust import corpus

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def dekker():
    return corpus.load("dekker")


@pytest.fixture(scope="session")
def dekker_fenced():
    return corpus.load("dekker_fenced")


@pytest.fixture(scope="session")
def diamond():
    return corpus.load("diamond")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
