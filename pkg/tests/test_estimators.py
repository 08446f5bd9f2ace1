import pickle
import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import GridSearchCV
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import MinMaxScaler
from sklearn.utils.estimator_checks import check_estimator

from cvxboost.estimators import BoostingClassifier, BoostingRegressor
from cvxboost.exceptions import ConfigError

from conftest import label_sample, sine_sample

# exact argmax over weak learners: near ties between weighted and repeated rows
# can resolve differently after rounding, so bitwise weight equivalence is not promised
TIE_XFAIL = {"check_sample_weight_equivalence_on_dense_data": "argmax ties flip under rounding"}


@pytest.mark.parametrize("est", [BoostingRegressor(max_iters=30), BoostingClassifier(max_iters=30)], ids=lambda e: type(e).__name__)
def test_sklearn_compatibility(est):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = check_estimator(est, on_fail=None, expected_failed_checks=TIE_XFAIL)
    failed = [r["check_name"] for r in results if r["status"] == "failed"]
    assert not failed


def test_regressor_fits_sine():
    X, y = sine_sample(200, 0)
    reg = BoostingRegressor(weak_class="depth:3", max_iters=500).fit(X, y)
    assert reg.score(X, y) > 0.8
    assert reg.trace_.meta["algorithm"] == 1
    reg2 = BoostingRegressor(algorithm=2, weak_class="depth:3", max_iters=500).fit(X, y)
    assert reg2.trace_.meta["nu"] == pytest.approx(0.1)


def test_classifier_labels_and_threshold():
    X, y01 = label_sample(200, 1)
    y = np.where(y01 > 0, "yes", "no")
    clf = BoostingClassifier(max_iters=200).fit(X, y)
    assert set(clf.predict(X)) <= {"yes", "no"}
    F = clf.decision_function(X)
    np.testing.assert_array_equal(clf.predict(X) == "yes", F > 0)


def test_pipeline_grid_search_and_pickle():
    X, y = sine_sample(80, 3)
    pipe = make_pipeline(MinMaxScaler(), BoostingRegressor(max_iters=50))
    gs = GridSearchCV(pipe, {"boostingregressor__weak_class": ["stump", "grid:3"]}, cv=2).fit(X, y)
    assert gs.best_params_["boostingregressor__weak_class"] in ("stump", "grid:3")
    reg = BoostingRegressor(max_iters=20).fit(X, y)
    back = pickle.loads(pickle.dumps(reg))
    np.testing.assert_array_equal(back.predict(X), reg.predict(X))
    assert clone(reg).get_params() == reg.get_params()


def test_bad_algorithm():
    X, y = sine_sample(10, 0)
    with pytest.raises(ConfigError):
        BoostingRegressor(algorithm=3).fit(X, y)
