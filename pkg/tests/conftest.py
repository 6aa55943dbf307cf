"""
Pytest configuration and fixtures for mvtlab tests
"""
import pytest

from mvtlab.database import make_session
from mvtlab.services import CacheService, CounterService, ExpLabService, GeometryService, SumsService
from mvtlab.systems import IntRange, LEFT, RIGHT, SlotGroup, WindowedForm, WindowSystem


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow ladder tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: ladder-scale test, run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_system(N, s, exact=(1, 2), windows=(), interval=None):
    """Symmetric s-vs-s system over ``interval`` (default (N/2, N])."""
    interval = interval or IntRange(N // 2 + 1, N)
    groups = (SlotGroup(interval, s, LEFT), SlotGroup(interval, s, RIGHT))
    forms = tuple(WindowedForm(power, tol, normalized) for power, tol, normalized in windows)
    return WindowSystem(groups, exact, forms, N)


@pytest.fixture
def build_system():
    return make_system


@pytest.fixture
def test_session():
    """In-memory database session"""
    session = make_session("sqlite://")
    try:
        yield session
    finally:
        session.rollback()
        session.close()


@pytest.fixture
def cache_service(tmp_path, test_session):
    """Cache service writing under a temporary directory"""
    return CacheService(str(tmp_path / "cache"), session=test_session)


@pytest.fixture
def counter():
    """Counter without cache or database"""
    return CounterService(workers=1)


@pytest.fixture
def explab(counter):
    """Experiment service on the plain counter"""
    return ExpLabService(counter, workers=1)


@pytest.fixture
def sums():
    return SumsService(workers=1)


@pytest.fixture
def geometry():
    return GeometryService(workers=2)


@pytest.fixture
def n8_system():
    """N_8 at N=32 with delta = 1/N"""
    return make_system(32, 4, windows=(("3/2", 1 / 32, True),))
