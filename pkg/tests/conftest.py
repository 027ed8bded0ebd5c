import numpy as np
import pytest

from rfsisso.data import Dataset, FeatureColumn, Target, UnitVector

_RESULTS: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and (rep.failed or rep.skipped)):
        _RESULTS.setdefault(mark.args[0], []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        outcomes = _RESULTS[k]
        if "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {k}: {status} ({len(outcomes)} test(s))")


def make_dataset(X, y, names=None, task="regression", units=None, classes=()):
    X = np.asarray(X, dtype=float)
    names = names or [f"f{i + 1}" for i in range(X.shape[1])]
    units = units or [UnitVector()] * X.shape[1]
    cols = tuple(FeatureColumn(n, X[:, j], units[j]) for j, n in enumerate(names))
    return Dataset(cols, Target(task, np.asarray(y), tuple(classes), "y"))
