import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from glovehand.hand import load_profile
from glovehand.intent import load_glove_profile

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def hand():
    return load_profile()


@pytest.fixture(scope="session")
def glove():
    return load_glove_profile()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotvec(rng, lo=1e-6, hi=np.pi - 1e-3):
    u = rng.normal(size=3)
    return u / np.linalg.norm(u) * rng.uniform(lo, hi)


# -- acceptance report -----------------------------------------------------------

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _criteria.get(n, (title, "PASS"))
    if failed:
        _criteria[n] = (title, "FAIL")
    elif call.when == "call":
        _criteria[n] = prev


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
