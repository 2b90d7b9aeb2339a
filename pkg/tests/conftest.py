import pytest

from cohomology import critical_b
from forcing import default_forcing, parse_forcing
from maps import GOLDEN_OMEGA, MapParams, SystemKind
from solver_config import solver_config

F4_B_STAR = 0.49493
F3_B_STAR = 0.36909
F1_B_STAR = 0.57975


@pytest.fixture
def golden():
    return GOLDEN_OMEGA


@pytest.fixture
def default_g():
    return default_forcing()


@pytest.fixture
def sin_g():
    return parse_forcing('sin:1')


@pytest.fixture(scope='session')
def f4_critical():
    return critical_b(SystemKind.PERIOD_DOUBLING, -3.0, GOLDEN_OMEGA, default_forcing())


@pytest.fixture
def f4_params(f4_critical):
    """Period doubling at a = -3, b = b*, forcing 1 + cos θ"""
    return MapParams(SystemKind.PERIOD_DOUBLING, -3.0, f4_critical.b_star)


@pytest.fixture
def f4_half(f4_critical):
    return MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.5 * f4_critical.b_star)


@pytest.fixture
def fixed_clock(monkeypatch):
    monkeypatch.setattr(solver_config, 'source_date_epoch', '1700000000')
