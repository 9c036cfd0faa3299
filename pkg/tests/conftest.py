from contextlib import contextmanager

import pytest

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with verdict(3, "gradients") as detail: ...; detail["max_err"] = e``.
    The line is written whether or not the body raises.
    """
    @contextmanager
    def record(number: int, name: str):
        detail: dict = {}
        ok = False
        try:
            yield detail
            ok = True
        finally:
            extra = " ".join(f"{k}={v}" for k, v in detail.items())
            VERDICTS[number] = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} {extra}".rstrip()

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
