import pytest

from qstail import _backend


@pytest.fixture
def compiled():
    if _backend.BACKEND != "compiled":
        pytest.skip("compiled extension not built")
    return _backend.kernels


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
