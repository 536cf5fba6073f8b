import numpy as np
import pytest
from hypothesis import settings

from rectldg import DIRICHLET, BoundarySpec, EnergyParams, RectDomain, make_grid

settings.register_profile("rectldg", max_examples=25, deadline=None)
settings.load_profile("rectldg")


@pytest.fixture
def strong_bc():
    return BoundarySpec(DIRICHLET, 0.03, None)


@pytest.fixture
def square16():
    return make_grid(RectDomain(1.0, 1.0), 1 / 16)


@pytest.fixture
def rect32():
    return make_grid(RectDomain(1.5, 1.0), 1 / 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
