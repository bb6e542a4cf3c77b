import numpy as np
import pytest
from hypothesis import settings

from survkit.cohort import Cohort, CovariateSchema

settings.register_profile("fast", max_examples=20)
settings.register_profile("ci", max_examples=100, deadline=None)
settings.load_profile("ci")

_criteria = {}


def grouped_cohort(times, events, groups, levels=None):
    """Cohort with a single categorical covariate ``g``."""
    groups = [str(g) for g in groups]
    levels = levels or sorted(set(groups))
    schema = CovariateSchema.build({"g": levels})
    codes = np.array([levels.index(g) for g in groups], dtype=np.int64)
    return Cohort(schema, np.asarray(times, float), np.asarray(events), {"g": codes})


def continuous_cohort(times, events, x):
    schema = CovariateSchema.build(continuous=["x"])
    return Cohort(schema, np.asarray(times, float), np.asarray(events), {"x": np.asarray(x, float)})


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _criteria.get(number, (text, True))
        _criteria[number] = (text, prev[1] and report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        text, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")
