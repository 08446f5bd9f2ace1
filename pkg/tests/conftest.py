import numpy as np
import pytest

from cvxboost.dataset import Measure


def sine_sample(n, seed, sigma=0.3, d=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    y = np.sin(2 * np.pi * X[:, 0]) + sigma * rng.standard_normal(n)
    return X, y


def label_sample(n, seed, d=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    eta = 0.5 + 0.3 * np.sin(2 * np.pi * X[:, 0])
    y = np.where(rng.uniform(size=n) < eta, 1.0, -1.0)
    return X, y


@pytest.fixture
def reg_measure():
    return Measure(*sine_sample(60, 11))


@pytest.fixture
def cls_measure():
    return Measure(*label_sample(60, 12))


# one line per acceptance criterion, collected by the `criterion` fixture
_CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        _CRITERIA[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
