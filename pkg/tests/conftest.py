import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from weatherformer.autodiff import default_dtype


@pytest.fixture(scope="session", autouse=True)
def single_thread():
    """Deterministic mode: one BLAS thread for the whole session."""
    with threadpool_limits(limits=1):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


_results_key = pytest.StashKey[dict]()

CRITERIA = {
    1: "gradient fidelity of the full encoder",
    2: "spatiotemporal encoding properties",
    3: "bitwise feature-mask and padding invariance",
    4: "pretraining reaches the noise floor on linear data",
    5: "every measurement becomes a target within one epoch",
    6: "daily and weekly scalers drift apart",
    7: "pretraining helps both downstream tasks",
    8: "MLM masking rate and task switch from the CLI",
    9: "meteorology matches the independent oracle",
    10: "ARIMA estimation and forecasting",
    11: "rolling influenza protocol",
    12: "evaluation arithmetic and split counts",
    13: "same seed gives identical metrics files",
}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    # record the call phase, plus setup or teardown errors
    if marker is None or (report.when != "call" and report.passed):
        return
    results = item.config.stash.setdefault(_results_key, {})
    results.setdefault(marker.args[0], []).append(report.passed)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_results_key, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in results:
            continue
        status = "PASS" if all(results[n]) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n:2d}: {CRITERIA[n]}")
