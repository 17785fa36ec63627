import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record a one-line verdict for the acceptance summary."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def add(label: str, passed: bool, detail: str) -> None:
        lines.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")

    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
