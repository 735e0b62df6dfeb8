import pytest

_RESULTS = pytest.StashKey()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    results = request.config.stash[_RESULTS]

    def record(number, status, detail):
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        line = f"[{status}] criterion {number}: {detail}"
        results[number] = line
        print(line)
        return status == "PASS"

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
