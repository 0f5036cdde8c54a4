"""Collects acceptance verdicts and prints them after the run."""
ACCEPTANCE = {}


def record(number, passed, detail):
    """Store the verdict of acceptance criterion ``number`` and echo it."""
    line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
