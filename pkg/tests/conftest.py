"""Collects the one-line acceptance verdicts and prints them at the end of
the session."""
import pytest

VERDICTS = {}


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` records the outcome of acceptance criterion n."""

    def record(n, ok, detail=""):
        VERDICTS[n] = (bool(ok), detail)
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
