import numpy as np
import pytest

from cvxboost.dataset import Measure, norm_muX
from cvxboost.diagnostics import (
    exact_partition_minimizer,
    step_summary,
    sum_square_steps,
    verify_trace,
)
from cvxboost.engine import BoostTrace, RunConfig, run_algorithm1, run_algorithm2
from cvxboost.exceptions import SchemaError, UnboundedError
from cvxboost.learners import FREE, GridPartition, parse_class
from cvxboost.losses import AbsolutePenalized, HingePenalized, LogitPenalized, SigmoidPenalized, Squared

from conftest import label_sample, sine_sample
from oracles import scalar_argmin


def _checks(report):
    return {c["name"]: c for c in report["checks"]}


def _toy_trace(risk, step, algo=1):
    n = len(risk)
    tr = BoostTrace({"algorithm": algo, "L": 2.0})
    for t in range(n):
        tr.append(t=t, risk=risk[t], step=step[t], f_norm=1.0 if t else 0.0, inner_prod=-4.0 * step[t] if t else 0.0, margin=0.0, F_norm=0.0)
    return tr


@pytest.mark.parametrize("algo", [1, 2])
def test_real_traces_pass(algo, reg_measure):
    if algo == 1:
        _, tr = run_algorithm1(Squared(0.1), reg_measure, parse_class("stump"), RunConfig(max_iters=200))
    else:
        _, tr = run_algorithm2(Squared(0.1), reg_measure, parse_class("stump", FREE), RunConfig(max_iters=200, nu=0.1))
    rep = verify_trace(tr, Squared(0.1))
    assert rep["pass"], rep
    assert "norm_bound" in _checks(rep)


def test_ascending_risk_fails_at_row_3():
    tr = _toy_trace([1.0, 0.5, 0.7, 0.6], [1.0, 0.1, 0.05, 0.01])
    c = _checks(verify_trace(tr, Squared()))["risk_nonincreasing"]
    assert not c["pass"] and c["row"] == 3


def test_growing_step_fails_at_row_2():
    tr = _toy_trace([1.0, 0.5, 0.1], [0.5, 0.7, 0.1])
    c = _checks(verify_trace(tr, Squared()))["step_nonincreasing"]
    assert not c["pass"] and c["row"] == 2


def test_tampered_csv_is_caught(reg_measure):
    _, tr = run_algorithm1(Squared(), reg_measure, parse_class("stump"), RunConfig(max_iters=50))
    back = BoostTrace.from_csv(tr.to_csv())
    back.rows["risk"][10] += 0.05
    assert not verify_trace(back, Squared())["pass"]


def test_empty_trace_rejected():
    with pytest.raises(SchemaError):
        verify_trace(BoostTrace({"algorithm": 1}), Squared())


def test_sum_square_steps():
    geo = 0.5 ** np.arange(60)
    assert sum_square_steps(geo) < 4 / 3 + 1e-12
    assert sum_square_steps(geo) == pytest.approx(4 / 3, rel=1e-12)
    assert sum_square_steps(np.zeros(5)) == 0.0


def test_step_summary_on_run(reg_measure):
    _, tr = run_algorithm1(Squared(), reg_measure, parse_class("stump"), RunConfig(max_iters=100))
    s = step_summary(tr)
    assert np.isfinite(s["sum_sq"]) and s["last_step"] < s["w0"]
    assert s["sum_sq"] == pytest.approx(sum_square_steps(tr))


def test_partition_minimizer_squared_cells():
    X, y = sine_sample(300, 2)
    w = np.random.default_rng(0).dirichlet(np.ones(300))
    m = Measure(X, y, w)
    g = GridPartition(1, 3)
    idx = g.cell_index(X)
    for gamma in (0.0, 0.5):
        pm = exact_partition_minimizer(Squared(gamma), m, g)
        for j in range(8):
            sel = idx == j
            want = np.dot(w[sel], y[sel]) / w[sel].sum() / (1 + gamma)
            assert pm.values[j] == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_partition_minimizer_constant_cell():
    m = Measure([[0.1], [0.2], [0.9]], [2.5, 2.5, -1.0])
    pm = exact_partition_minimizer(Squared(), m, GridPartition(1, 1))
    assert pm.values.tolist() == [2.5, -1.0] and pm.risk == 0.0


@pytest.mark.parametrize(
    "loss,smooth",
    [(LogitPenalized(0.1), None), (SigmoidPenalized(0.2, 0.1), None), (AbsolutePenalized(0.1), 0.3), (HingePenalized(0.1), None)],
)
def test_partition_minimizer_against_grid_search(loss, smooth):
    X, y = (label_sample if loss.task == "classification" else sine_sample)(120, 8)
    m = Measure(X, y, halfwidth=smooth)
    g = GridPartition(1, 2)
    pm = exact_partition_minimizer(loss, m, g)
    idx = g.cell_index(X)
    for j in range(4):
        sub = m.restrict(idx == j)
        from cvxboost.losses import risk

        ref = scalar_argmin(lambda a: risk(loss, sub, a), -5, 5)
        assert pm.values[j] == pytest.approx(ref, abs=1e-6)
        assert pm.sandwich[j] >= -1e-9


def test_unbounded_cell():
    m = Measure([[0.1], [0.2]], [1.0, 1.0])
    with pytest.raises(UnboundedError):
        exact_partition_minimizer(LogitPenalized(0.0), m, GridPartition(1, 0))


def test_engine_reaches_partition_optimum():
    X, y = sine_sample(200, 6)
    m = Measure(X, y)
    pm = exact_partition_minimizer(Squared(0.2), m, GridPartition(1, 3))
    model, tr = run_algorithm1(Squared(0.2), m, parse_class("grid:3"), RunConfig(max_iters=5000))
    assert abs(tr.rows["risk"][-1] - pm.risk) <= 1e-6
    assert norm_muX(m, model.predict(X) - pm.F) <= 1e-3
