"""Shared pytest hooks.

Acceptance-criterion verdicts are collected here and echoed in the terminal
summary so they remain visible under output capture.
"""

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
