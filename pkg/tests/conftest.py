import pytest

from brwlab.offspring import make_gaussian_binary, make_two_point

_CRITERION_LINES = []


@pytest.fixture(scope="session")
def two_point():
    return make_two_point()


@pytest.fixture(scope="session")
def gaussian():
    return make_gaussian_binary()


@pytest.fixture(scope="session")
def criterion_log():
    """Record one PASS/FAIL line per acceptance criterion.

    Lines are echoed immediately (visible under -s) and replayed in the
    terminal summary so the one-line-per-criterion report survives output
    capture.
    """

    def record(num, ok, detail):
        line = f"CRITERION {num:02d} {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERION_LINES.append((num, line))
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)
