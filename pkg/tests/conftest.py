import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record a numbered acceptance result; printed in the terminal summary."""
    results = request.config.stash[_CRITERIA_KEY]

    def record(number: int, ok: bool, detail: str) -> bool:
        results[number] = (ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
