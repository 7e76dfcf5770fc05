import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion_report(request):
    """Record one ``PASS``/``FAIL`` line for the end-of-run acceptance summary."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def report(label: str, passed: bool, detail: str = ""):
        line = f"{label}: {'PASS' if passed else 'FAIL'}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
