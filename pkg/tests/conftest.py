import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.fixture(scope="session")
def criteria(request):
    """Registry of acceptance outcomes, printed in the terminal summary."""
    return request.config.stash[_KEY]


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, name, detail = results[num]
        terminalreporter.write_line(f"criterion {num} [{name}]: {'PASS' if ok else 'FAIL'}  {detail}")
