import re

from acceptance_report import LINES


def pytest_terminal_summary(terminalreporter):
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(LINES, key=lambda s: (int(re.match(r"\d+", s.split()[1]).group()), s.split()[1])):
        terminalreporter.write_line(line)
