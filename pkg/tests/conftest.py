import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tsdbench.imaging import FrameSequence

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_seq(rng):
    """Six random 12x16 frames."""
    return FrameSequence(rng.random((6, 12, 16, 3)))


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.delenv("ROBUSTBENCH_THREADS", raising=False)


# -- acceptance criteria summary ---------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.passed else "FAIL"
        _CRITERIA[n] = f"criterion {n}: {verdict}  {title}"
        if report.when == "call":
            report.sections.append(("acceptance", _CRITERIA[n]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
