import math

import pytest

from threshold_options import ABMParams, CIRParams, GBMParams, GeometricOUParams, make_family

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line pass/fail result for the acceptance summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def gbm2():
    """beta = 2: alpha = 0, sigma^2 = rho."""
    return make_family("GBM", GBMParams(0.0, 0.2), 0.04, 1.0)


@pytest.fixture
def gbm16():
    """beta ~ 1.6085, p* ~ 2.6434."""
    return make_family("GBM", GBMParams(0.05, 0.2), 0.1, 1.0)


@pytest.fixture
def abm1():
    """beta = 1: alpha = 0, sigma^2 = 2 rho."""
    return make_family("ABM", ABMParams(0.0, math.sqrt(0.1)), 0.05, 2.0)


@pytest.fixture
def cir():
    return make_family("CIR", CIRParams(0.5, 1.0, 0.3), 0.05, 0.8)


@pytest.fixture
def gou():
    return make_family("GeometricOU", GeometricOUParams(0.5, 1.0, 0.3), 0.05, 0.8)
