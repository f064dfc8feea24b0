import math

import numpy as np
import pytest

from enkbf_lab.model import linear_model


@pytest.fixture
def scalar_model():
    """a=0, d=1/2, h=1, r=1: stationary Riccati solution 1."""
    return linear_model([[0.0]], c=[[math.sqrt(0.5)]], r=[[1.0]])


@pytest.fixture
def unstable_scalar_model():
    """a=1, d=1/2, h=1, r=1: stationary Riccati solution 1 + sqrt(2)."""
    return linear_model([[1.0]], c=[[math.sqrt(0.5)]], r=[[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance sub-check: ``criterion(number, title, passed, detail)``."""

    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} [{number}] {title}: {detail}"
        print(line)
        _ACCEPTANCE.setdefault(number, []).append((title, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[number]
        ok = all(passed for _, passed, _ in checks)
        detail = "; ".join(f"{title}: {d}" for title, _, d in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
