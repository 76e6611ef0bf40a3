from __future__ import annotations

import pytest

from qspec.contfrac import parse_cf
from qspec.schrodinger import ModelParams

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record(n: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[n] = f"{'PASS' if passed else 'FAIL'}  criterion {n:>2}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def fib():
    return ModelParams(parse_cf("1*"), 30.0)


@pytest.fixture(scope="session")
def three():
    return ModelParams(parse_cf("3*"), 30.0)
