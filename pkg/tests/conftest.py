import _helpers


def pytest_terminal_summary(terminalreporter):
    for line in _helpers.ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
