from ._report import lines


def pytest_terminal_summary(terminalreporter):
    rows = lines()
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
