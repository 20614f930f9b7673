import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# Per-criterion pass/fail lines collected by the acceptance module; re-emitted
# in the terminal summary so they are visible even with captured output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
