import sys


def pytest_terminal_summary(terminalreporter):
    """Echo acceptance criterion PASS/FAIL lines after the test run, where
    they are visible even when pytest captures per-test output."""
    for name in ("tests.test_acceptance", "test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None:
            break
    lines = getattr(mod, "ACCEPTANCE_LINES", []) if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
