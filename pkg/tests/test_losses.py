import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from cvxboost.dataset import Measure
from cvxboost.exceptions import AssumptionError, ConfigError, NumericalError
from cvxboost.losses import (
    CATALOG,
    AbsolutePenalized,
    ExponentialPenalized,
    Grid,
    HingePenalized,
    LogitPenalized,
    SigmoidPenalized,
    Squared,
    check_assumptions,
    kappa,
    loss_values,
    parse_loss,
    resolve_lipschitz,
    risk,
    subgrad_values,
)

LN2 = math.log(2.0)


def _by_name(report):
    return {c["name"]: c for c in report["checks"]}


def test_squared_risk_at_zero():
    m = Measure([[0.0], [1.0]], [1.0, -1.0])
    assert risk(Squared(), m, 0.0) == 1.0


def test_logit_risk_at_zero_is_one():
    m = Measure([[0.0], [1.0], [2.0]], [1.0, -1.0, 1.0])
    assert risk(LogitPenalized(0.1), m, 0.0) == pytest.approx(1.0, rel=1e-15)


def test_squared_subgradient_vanishes_on_interpolant():
    m = Measure([[0.0], [1.0], [2.0]], [0.3, -1.0, 2.0])
    assert np.all(subgrad_values(Squared(), m, m.y.copy()) == 0.0)


def test_absolute_subgradient_sign_convention():
    m = Measure([[0.0]], [5.0])
    assert subgrad_values(AbsolutePenalized(0.0), m, 0.0)[0] == -1.0
    # sgn(0) = 0: a tie leaves only the penalty slope
    assert AbsolutePenalized(0.5).xi(2.0, 2.0) == 2.0


def test_logit_slope_at_zero_matches_finite_difference():
    loss = LogitPenalized(0.0)
    h = 1e-6
    fd = (loss.psi(h, 1.0) - loss.psi(-h, 1.0)) / (2 * h)
    assert loss.xi(0.0, 1.0) == pytest.approx(-1 / (2 * LN2), rel=1e-12)
    assert loss.xi(0.0, 1.0) == pytest.approx(fd, abs=1e-8)


@pytest.mark.parametrize("name", ["squared", "logit", "sigmoid", "piecewise_exp", "exponential"])
@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_penalty_raises_alpha_and_L_by_two_gamma(name, gamma):
    base = CATALOG[name](gamma=0.0) if name != "sigmoid" else SigmoidPenalized(0.2, 0.0)
    pen = base.rebuild(gamma=gamma)
    assert pen.alpha - base.alpha == pytest.approx(2 * gamma, abs=1e-15)
    assert pen.lipschitz_L == pytest.approx(base.lipschitz_L + 2 * gamma, rel=1e-15)
    # and the sampled strong convexity inequality holds with the raised alpha
    if pen.alpha > 0:
        assert _by_name(check_assumptions(pen))["A2"]["pass"]


def test_cataloged_constants():
    assert Squared().alpha == 2.0 and Squared().lipschitz_L == 2.0
    assert LogitPenalized(0.1).lipschitz_L == pytest.approx(1 / (4 * LN2) + 0.2)
    assert SigmoidPenalized(0.2, 0.1).alpha == pytest.approx(2 * (0.1 - 0.04))
    assert ExponentialPenalized(0.0, M=5).lipschitz_L == pytest.approx(math.exp(5))


def test_parse_loss():
    loss = parse_loss("sigmoid:beta=0.2,gamma=0.1")
    assert loss.params == {"beta": 0.2, "gamma": 0.1}
    assert parse_loss("ls").name == "squared"
    assert parse_loss("logit", gamma=0.5).gamma == 0.5
    with pytest.raises(ConfigError):
        parse_loss("nope")
    with pytest.raises(ConfigError):
        parse_loss("logit:gamma")
    with pytest.raises(ConfigError):
        parse_loss("squared:gamma=-1")


def test_squared_passes_every_check():
    rep = check_assumptions(Squared(), Measure(np.linspace(0, 1, 9)[:, None], np.linspace(-1, 1, 9)))
    assert rep["pass"], rep


def test_sigmoid_beta_above_root_gamma_fails_A2():
    assert not _by_name(check_assumptions(SigmoidPenalized(1.0, 0.5)))["A2"]["pass"]


def test_absolute_without_density_bound_is_flagged():
    m = Measure([[0.0], [0.0], [1.0]], [0.0, 2.0, 1.0])
    a3 = _by_name(check_assumptions(AbsolutePenalized(0.1), m))["A3"]
    assert not a3["pass"] and "requires density bound" in a3["note"]
    with pytest.raises(AssumptionError, match="requires a density bound"):
        resolve_lipschitz(AbsolutePenalized(0.1), m)


def test_absolute_smoothed_gets_finite_L_and_passes_A3():
    m = Measure.smoothed([[0.0], [0.0], [1.0]], [0.0, 2.0, 1.0], halfwidth=0.5)
    assert resolve_lipschitz(AbsolutePenalized(0.1), m) == pytest.approx(2 * (1.0 + 0.1))
    assert _by_name(check_assumptions(AbsolutePenalized(0.1), m))["A3"]["pass"]


def test_classification_losses_need_pm1_labels():
    with pytest.raises(AssumptionError):
        resolve_lipschitz(LogitPenalized(0.1), Measure([[0.0]], [0.5]))



@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 2.0), st.floats(0, 1))
def test_absolute_smoothed_closed_form(x, y, h, g):
    loss = AbsolutePenalized(g)
    # quadrature oracle with the kink location passed explicitly
    want_psi = quad(lambda u: abs(y + u - x), -h, h, points=[x - y] if abs(x - y) < h else None)[0] / (2 * h) + g * x * x
    want_xi = quad(lambda u: np.sign(x - y - u), -h, h, points=[x - y] if abs(x - y) < h else None)[0] / (2 * h) + 2 * g * x
    assert loss.smoothed_psi(np.array([x]), np.array([y]), h)[0] == pytest.approx(want_psi, rel=1e-9, abs=1e-9)
    assert loss.smoothed_xi(np.array([x]), np.array([y]), h)[0] == pytest.approx(want_xi, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.sampled_from([-1.0, 1.0]), st.floats(0.05, 0.9), st.floats(0, 1))
def test_hinge_smoothed_closed_form(x, y, h, g):
    loss = HingePenalized(g)
    # labels y + hU; the hinge kink sits where (y + u) x = 1
    kinks = [] if x == 0 else [k for k in (1.0 / x - y,) if -h < k < h]
    want_psi = quad(lambda u: max(0.0, 1 - (y + u) * x), -h, h, points=kinks or None)[0] / (2 * h) + g * x * x
    want_xi = quad(lambda u: -(y + u) if (y + u) * x < 1 else 0.0, -h, h, points=kinks or None)[0] / (2 * h) + 2 * g * x
    assert loss.smoothed_psi(np.array([x]), np.array([y]), h)[0] == pytest.approx(want_psi, rel=1e-8, abs=1e-9)
    assert loss.smoothed_xi(np.array([x]), np.array([y]), h)[0] == pytest.approx(want_xi, rel=1e-8, abs=1e-9)


def test_kappa_squared():
    m = Measure([[0.0], [1.0]], [1.0, 3.0])
    # xi(0, y) = -2y, so kappa^2 = mean(4 y^2) = 20
    assert kappa(Squared(), m) == pytest.approx(math.sqrt(20.0))


def test_overflow_is_reported():
    m = Measure([[0.0]], [1.0])
    with pytest.raises(NumericalError):
        loss_values(ExponentialPenalized(0.0), m, -1000.0)


def test_every_catalog_loss_is_convex_on_the_grid():
    for name, ctor in CATALOG.items():
        loss = ctor(gamma=0.1) if name != "sigmoid" else SigmoidPenalized(0.2, 0.1)
        checks = _by_name(check_assumptions(loss, grid=Grid(n_x=21)))
        assert checks["convexity"]["pass"], name
        assert checks["subgradient_inequality"]["pass"], name
        assert checks["subgradient_interval"]["pass"], name
