"""Collects one status line per acceptance criterion for the terminal summary."""

LINES = []


def report(number, title, passed, detail=""):
    line = f"{'PASS' if passed else 'FAIL'} {number} {title}" + (f": {detail}" if detail else "")
    LINES.append(line)
    print(line)
    return passed
