from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from boxvis.geometry import ClassLabel, ObjectBox
from boxvis.scene import Scene

FIXTURES = Path(__file__).parent / "fixtures"

# first calls load compiled kernels from cache, so per-example timing is noisy
settings.register_profile("boxvis", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("boxvis")

_criteria = {}


@pytest.fixture
def fixtures():
    return FIXTURES


def make_scene(rows, frame_id=None):
    """Scene from (center, dims, yaw) triples; ids follow row order."""
    boxes = [ObjectBox(k, ClassLabel.CAR, c, d, y) for k, (c, d, y) in enumerate(rows)]
    return Scene(tuple(boxes), frame_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    ok = report.passed if report.when == "call" else not (report.failed or report.skipped)
    prev = _criteria.get(number, (title, True))
    _criteria[number] = (title, prev[1] and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number} {title}: {'PASS' if ok else 'FAIL'}")
