"""scikit-learn style wrappers around the two boosting engines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets, type_of_target
from sklearn.utils.validation import _check_sample_weight, check_is_fitted, validate_data

from .dataset import Measure
from .engine import RunConfig, nu_bound, run_algorithm1, run_algorithm2
from .exceptions import ConfigError
from .learners import FREE, SIGN, parse_class
from .losses import parse_loss, resolve_lipschitz

# fraction of the admissible range 1/(2L) used when nu is left unset
DEFAULT_NU_FRACTION = 0.4


class _BaseBoosting(BaseEstimator):
    def __init__(
        self,
        loss="squared",
        algorithm=1,
        weak_class="stump",
        gamma=None,
        nu=None,
        w0=1.0,
        max_iters=1000,
        smoothing=None,
        abort_on_violation=True,
    ):
        self.loss = loss
        self.algorithm = algorithm
        self.weak_class = weak_class
        self.gamma = gamma
        self.nu = nu
        self.w0 = w0
        self.max_iters = max_iters
        self.smoothing = smoothing
        self.abort_on_violation = abort_on_violation

    def _boost(self, X, y, sample_weight):
        if self.algorithm not in (1, 2):
            raise ConfigError(f"algorithm must be 1 or 2, got {self.algorithm!r}")
        if sample_weight is not None:
            sample_weight = _check_sample_weight(sample_weight, X, ensure_non_negative=True)
            # zero-weight rows would still add candidate thresholds
            keep = sample_weight > 0
            X, y, sample_weight = X[keep], y[keep], sample_weight[keep] / sample_weight.sum()
        m = Measure(X, y, sample_weight, halfwidth=self.smoothing)
        loss = parse_loss(self.loss, gamma=self.gamma)
        leaf = SIGN if self.algorithm == 1 else FREE
        cfg = parse_class(self.weak_class, leaf=leaf)
        if self.algorithm == 1:
            rc = RunConfig(max_iters=self.max_iters, w0=self.w0, abort_on_violation=self.abort_on_violation)
            self.model_, self.trace_ = run_algorithm1(loss, m, cfg, rc)
        else:
            nu = self.nu
            if nu is None:
                nu = DEFAULT_NU_FRACTION * nu_bound(resolve_lipschitz(loss, m))
            rc = RunConfig(max_iters=self.max_iters, nu=nu, abort_on_violation=self.abort_on_violation)
            self.model_, self.trace_ = run_algorithm2(loss, m, cfg, rc)
        # keep the description, not the LossSpec: its callables do not pickle
        self.loss_ = loss.describe()
        return self

    def _values(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        return self.model_.predict(X)


class BoostingRegressor(RegressorMixin, _BaseBoosting):
    """Functional gradient boosting for regression losses.

    Parameters
    ----------
    loss : str
        Catalog entry such as ``"squared"`` or ``"absolute:gamma=0.1"``.
    algorithm : {1, 2}
        1 uses sign-leaf trees with the adaptive step rule, 2 uses
        least-squares trees with the fixed step ``nu``.
    weak_class : str
        ``stump``, ``tree:k``, ``depth:D`` or ``grid:k``.
    gamma : float, optional
        Overrides the loss penalty ``gamma * F^2``.
    smoothing : float, optional
        Half-width of the uniform response smoothing; needed by the absolute loss.
    """

    def fit(self, X, y, sample_weight=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        return self._boost(X, y.astype(float), sample_weight)

    def predict(self, X):
        return self._values(X)


class BoostingClassifier(ClassifierMixin, _BaseBoosting):
    """Binary classifier: the larger class label is coded +1, the smaller -1."""

    def __init__(self, loss="logit:gamma=0.1", algorithm=1, weak_class="stump", gamma=None, nu=None,
                 w0=1.0, max_iters=1000, smoothing=None, abort_on_violation=True):
        super().__init__(loss, algorithm, weak_class, gamma, nu, w0, max_iters, smoothing, abort_on_violation)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def fit(self, X, y, sample_weight=None):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        classes, codes = np.unique(y, return_inverse=True)
        if classes.size < 2:
            raise ValueError("Classifier can't train when only one class is present")
        if type_of_target(y) != "binary":
            raise ValueError("Only binary classification is supported by BoostingClassifier")
        self.classes_ = classes
        return self._boost(X, np.where(codes == 1, 1.0, -1.0), sample_weight)

    def decision_function(self, X):
        return self._values(X)

    def predict(self, X):
        F = self._values(X)
        # +1 only where F is strictly positive
        return self.classes_[(F > 0).astype(int)]
