"""Collects one verdict line per acceptance check and prints them after the run."""

VERDICTS: list[tuple[str, bool, str]] = []


def record(name: str, passed: bool, detail: str) -> bool:
    VERDICTS.append((name, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance verdicts")
    for name, passed, detail in VERDICTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
