import pytest


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def report(request):
    """``report(criterion, passed, detail)`` prints and keeps one summary line."""
    lines = request.config.acceptance_lines

    def _report(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
        print(line)
        lines.append(line)
        return passed

    return _report
