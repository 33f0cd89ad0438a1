import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from unfold.operators import KernelSpec, build_stiffness_matrix

settings.register_profile("unfold", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("unfold")


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    # keep stiffness caches out of the user's home directory
    path = tmp_path_factory.mktemp("stiffness-cache")
    old = os.environ.get("UNFOLD_CACHE_DIR")
    os.environ["UNFOLD_CACHE_DIR"] = str(path)
    yield path
    if old is None:
        os.environ.pop("UNFOLD_CACHE_DIR", None)
    else:
        os.environ["UNFOLD_CACHE_DIR"] = old


@pytest.fixture(scope="session")
def log_kernel():
    return KernelSpec("log-potential-periodized")


@pytest.fixture(scope="session")
def K6(log_kernel):
    return build_stiffness_matrix(log_kernel, 6)


@pytest.fixture(scope="session")
def K8(log_kernel):
    return build_stiffness_matrix(log_kernel, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one line per criterion -------------------------------

_CRITERIA = {}
_SETUP_TIME = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    if report.when == "setup":
        # module fixtures often carry the heavy lifting; count them in
        _SETUP_TIME[item.nodeid] = report.duration
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        detail = dict(item.user_properties).get("detail", "")
        duration = report.duration + (_SETUP_TIME.get(item.nodeid, 0.0) if report.when == "call" else 0.0)
        _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, duration, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title} ({duration:.1f} s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
