import numpy as np
import pytest

from stochhomog.maxent import MatrixFieldParams, orthotropic_mean
from stochhomog.spectral import build_grid

N_CRITERIA = 11
_ACCEPTANCE: dict[int, str] = {}


class ConstantField:
    """Elasticity field equal to one matrix everywhere."""

    def __init__(self, C):
        self.C = np.asarray(C, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.C, x.shape[:-1] + (6, 6)).copy()


@pytest.fixture(scope="session")
def mean():
    return orthotropic_mean(1e10, 0.5e10, 0.1e10, 0.25, 0.15, 0.1)


@pytest.fixture(scope="session")
def mfp():
    return MatrixFieldParams(0.4)


@pytest.fixture(scope="session")
def grid4():
    return build_grid(4)


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(_ACCEPTANCE.get(k, f"FAIL criterion {k:>2}: did not run to completion"))
