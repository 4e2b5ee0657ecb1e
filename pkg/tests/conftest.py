import pytest

from cgq import make_context


@pytest.fixture(scope="session")
def ctx16():
    return make_context(16)


@pytest.fixture(scope="session")
def ctx64():
    return make_context(64)


@pytest.fixture(scope="session")
def ctx32():
    return make_context(32)


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
