import acceptance_report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_report.lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_report.lines:
        terminalreporter.write_line(line)
