import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from colforth import columnar
from colforth.machine import Machine

settings.register_profile(
    "colforth", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("colforth")

# Every ColumnarResult built during a test is checked for offsets validity at teardown.
_CREATED: list = []
_original_post_init = columnar.ColumnarResult.__post_init__


def _recording_post_init(self):
    _original_post_init(self)
    _CREATED.append(self)


columnar.ColumnarResult.__post_init__ = _recording_post_init
RESULTS_CHECKED = {"count": 0}
MEASUREMENTS: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "invalid_offsets_expected: test builds malformed results on purpose")


def pytest_terminal_summary(terminalreporter):
    if MEASUREMENTS:
        terminalreporter.section("acceptance measurements")
        for name, value in MEASUREMENTS.items():
            terminalreporter.write_line(f"{name}: {value}")


@pytest.fixture(autouse=True)
def offsets_validity(request):
    _CREATED.clear()
    yield
    created = list(_CREATED)
    _CREATED.clear()
    if request.node.get_closest_marker("invalid_offsets_expected"):
        return
    for result in created:
        result.validate()
    RESULTS_CHECKED["count"] += len(created)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run(source, inputs=None, stack=()):
    m = Machine(source)
    reason = m.run(inputs or {}, stack)
    return m, reason
