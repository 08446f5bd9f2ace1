import math

import numpy as np
import pytest

from cvxboost.dataset import Measure
from cvxboost.diagnostics import exact_partition_minimizer
from cvxboost.engine import RunConfig, run_algorithm1
from cvxboost.exceptions import CapacityError, ConfigError, UnsupportedGenerator
from cvxboost.lab import ConsistencyConfig, GapCurve, bayes_reference, check_schedule, make_generator, run_consistency
from cvxboost.learners import GridPartition, parse_class
from cvxboost.losses import AbsolutePenalized, LogitPenalized, Squared, parse_loss


def _names(report):
    return {c["name"]: c for c in report["conditions"]}


def test_bayes_references():
    assert bayes_reference(make_generator("sine", 0.3), Squared()) == pytest.approx(0.09)
    assert bayes_reference(make_generator("noiseless_sine"), Squared()) == 0.0
    assert bayes_reference(make_generator("logit_const"), LogitPenalized()) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(UnsupportedGenerator):
        bayes_reference(make_generator("logit_sine"), Squared())
    with pytest.raises(UnsupportedGenerator):
        make_generator("spiral")


def test_logit_bayes_against_monte_carlo():
    gen = make_generator("logit_sine")
    rng = np.random.default_rng(0)
    X, y = gen.sample(400_000, 1, rng)
    mc = np.mean(LogitPenalized().psi(gen.f_star(X[:, 0]), y))
    assert bayes_reference(gen, LogitPenalized()) == pytest.approx(mc, abs=4e-3)


def test_loglog_rule_trends_up_to_a_million():
    cfg = ConsistencyConfig(k_rule="loglog")
    rep = check_schedule(cfg, schedule=[200, 2000, 20000, 200000, 10**6])
    assert rep["pass"], rep
    assert len(rep["conditions"]) == 3


def test_constant_k_is_flagged():
    rep = check_schedule(ConsistencyConfig(k_rule="const:3"))
    c = _names(rep)["k_n -> inf"]
    assert not c["pass"] and c["message"] == "k_n -> inf violated"


def test_identity_k_is_flagged():
    rep = check_schedule(ConsistencyConfig(k_rule="identity"))
    assert not _names(rep)["2^(d k_n) / sqrt(n) -> 0"]["pass"]
    assert rep["advisories"]


def test_general_conditions_for_logit():
    rep = check_schedule(ConsistencyConfig(loss="logit", generator="logit_sine"))
    assert set(_names(rep)) == {"k_n -> inf", "log N / (n v_n) -> 0", "zeta rate -> 0", "gamma_n -> 0"}
    assert rep["pass"]
    assert all(g > 0 for g in rep["gamma_n"])
    bad = check_schedule(ConsistencyConfig(loss="logit", generator="logit_sine", gamma_rule="zero"))
    assert not bad["pass"]


def test_short_schedule_fails_advisory():
    rep = check_schedule(ConsistencyConfig(schedule=(100, 200)))
    assert not rep["pass"] and rep["advisories"]


def test_bad_configs():
    with pytest.raises(ConfigError):
        ConsistencyConfig(schedule=(200, 100, 300))
    with pytest.raises(ConfigError):
        ConsistencyConfig.from_json('{"colour": 1}')
    with pytest.raises(ConfigError):
        run_consistency(ConsistencyConfig(k_rule="const:3", replications=1))
    with pytest.raises(CapacityError):
        run_consistency(ConsistencyConfig(k_rule="const:30", force=True, replications=1))


def test_tiny_smoke_curve():
    cfg = ConsistencyConfig(schedule=(8, 16, 32), k_rule="const:3", force=True, replications=3, test_factor=20)
    curve = run_consistency(cfg)
    assert len(curve.rows) == 3
    for r in curve.rows:
        assert math.isfinite(r["gap"]) and r["gap"] > 0 and r["se"] >= 0
    head, cols = curve.to_csv().splitlines()[:2]
    assert head.startswith("# cvxboost-gapcurve/1")
    assert cols == "n,mean_risk,se,bayes,gap,k_n,gamma_n"


def test_curve_reproducible_and_above_bayes():
    cfg = ConsistencyConfig(schedule=(50, 100, 400), replications=4, force=True)
    a, b = run_consistency(cfg), run_consistency(cfg)
    assert a.to_csv() == b.to_csv()
    for r in a.rows:
        assert r["mean_risk"] >= r["bayes"] - 2 * r["se"]


def test_logit_lab_runs():
    cfg = ConsistencyConfig(loss="logit", generator="logit_sine", schedule=(100, 400, 1600), replications=2)
    curve = run_consistency(cfg)
    assert np.all(np.isfinite(curve.gaps))


def test_engine_grid_matches_partition_minimizer():
    gen = make_generator("sine", 0.3)
    X, y = gen.sample(2000, 1, np.random.default_rng(1))
    m = Measure(X, y)
    cfg = ConsistencyConfig()
    k = cfg.k_n(2000)
    model, tr = run_algorithm1(Squared(), m, parse_class(f"grid:{k}"), RunConfig())
    pm = exact_partition_minimizer(Squared(), m, GridPartition(1, k))
    assert abs(tr.rows["risk"][-1] - pm.risk) <= 1e-6
