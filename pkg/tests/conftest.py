import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Callable ``log(cid, name, passed, detail, seconds)`` recording one acceptance line."""
    lines = request.config.stash[_LINES_KEY]

    def log(cid, name, passed, detail, seconds):
        lines.append((cid, f"{'PASS' if passed else 'FAIL'} [{cid:2d}] {name}: {detail} ({seconds:.2f}s)"))

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
