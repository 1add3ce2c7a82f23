import numpy as np
import pytest

from relaxhjb import smoothmax as sm

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


SMOOTH_KINDS = [sm.GeneratorKind.ENTROPY, sm.GeneratorKind.CHKS, sm.GeneratorKind.ZANG]
