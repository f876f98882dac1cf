import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and return its verdict."""

    def record(number, title, reports):
        ok = all(r.passed for r in reports)
        worst = "; ".join(f"{r.name}={r.max_deviation:.3e} (tol {r.tolerance:.1e})" for r in reports)
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {worst}"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
