"""Consistency laboratory.

Draw samples of growing size from generators whose risk minimizer ``F*`` is
known, boost to convergence over midpoint grid trees of level ``k_n`` with
penalty ``gamma_n``, and measure how far the population risk of the result
sits above the Bayes risk ``A(F*)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import Measure
from .engine import RunConfig, run_algorithm1
from .exceptions import ConfigError, UnsupportedGenerator
from .learners import GRID_GUARD, enumerate_grid_class, parse_class
from .losses import LossSpec, parse_loss

CURVE_SCHEMA = "cvxboost-gapcurve/1"


# ------------------------------------------------------------- generators


@dataclass(frozen=True)
class Generator:
    """``X`` uniform on ``[0, 1]^d``; ``Y`` depends on the first coordinate only."""

    name: str
    task: str
    sigma: float = 0.0

    def f_star(self, x1):
        if self.name in ("sine", "noiseless_sine"):
            return np.sin(2.0 * np.pi * x1)
        return np.log(self.eta(x1) / (1.0 - self.eta(x1)))

    def eta(self, x1):
        if self.name == "logit_sine":
            return 0.5 + 0.4 * np.sin(2.0 * np.pi * x1)
        if self.name == "logit_const":
            return np.full_like(np.asarray(x1, dtype=float), 0.5)
        raise UnsupportedGenerator(f"{self.name} is not a classification generator")

    def sample(self, n, d, rng):
        X = rng.uniform(size=(n, d))
        x1 = X[:, 0]
        if self.task == "regression":
            y = self.f_star(x1)
            if self.sigma > 0:
                y = y + self.sigma * rng.standard_normal(n)
        else:
            y = np.where(rng.uniform(size=n) < self.eta(x1), 1.0, -1.0)
        return X, y


def make_generator(name, sigma=0.3):
    if name == "sine":
        return Generator("sine", "regression", float(sigma))
    if name == "noiseless_sine":
        return Generator("noiseless_sine", "regression", 0.0)
    if name in ("logit_sine", "logit_const"):
        return Generator(name, "classification")
    raise UnsupportedGenerator(f"unknown generator {name!r}")


def _gl_uniform(n_nodes=2000, panels=50):
    """Composite Gauss-Legendre nodes and weights for the uniform law on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes // panels)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (lo + (hi - lo) * (x + 1.0) / 2.0).ravel()
    weights = np.broadcast_to((hi - lo) * w / 2.0, (panels, x.size)).ravel()
    return nodes, weights


def bayes_reference(gen: Generator, loss: LossSpec) -> float:
    """Population risk ``A(F*)`` of the unpenalized loss at the true minimizer."""
    if loss.gamma != 0:
        loss = loss.rebuild(gamma=0.0)
    if gen.task == "regression":
        if loss.name == "squared":
            return gen.sigma**2
        if loss.name == "absolute":
            return gen.sigma * math.sqrt(2.0 / math.pi)
    elif loss.name == "logit":
        x, w = _gl_uniform()
        eta, F = gen.eta(x), gen.f_star(x)
        vals = eta * loss.psi(F, 1.0) + (1.0 - eta) * loss.psi(F, -1.0)
        return float(np.dot(w, vals))
    raise UnsupportedGenerator(f"no closed-form Bayes risk for {gen.name} under {loss.name} loss")


# -------------------------------------------------------------- schedules


def _k_rule(spec) -> Callable[[int, int], int]:
    if callable(spec):
        return spec
    name, _, arg = str(spec).partition(":")
    if name == "log":  # ceil(log2(n) / (d + 2))
        return lambda n, d: max(1, math.ceil(math.log2(n) / (d + 2)))
    if name == "loglog":
        return lambda n, d: max(0, math.floor(math.log2(math.log2(n))))
    if name == "const":
        k = int(arg)
        return lambda n, d: k
    if name == "identity":
        return lambda n, d: n
    raise ConfigError(f"unknown k_n rule {spec!r} (log, loglog, const:K, identity)")


def _gamma_rule(spec, phi: LossSpec) -> Callable[[int], float]:
    if callable(spec):
        return spec
    name, _, arg = str(spec).partition(":")
    if name == "auto":
        name = "zero" if phi.alpha > 0 else "inv_log"
    if name == "zero":
        return lambda n: 0.0
    if name == "inv_log":
        return lambda n: 1.0 / math.log(n + math.e)
    if name == "const":
        g = float(arg)
        return lambda n: g
    raise ConfigError(f"unknown gamma_n rule {spec!r} (auto, zero, inv_log, const:G)")


@dataclass
class ConsistencyConfig:
    d: int = 1
    generator: str = "sine"
    sigma: float = 0.3
    schedule: tuple = (200, 2000, 20000)
    k_rule: object = "log"
    gamma_rule: object = "auto"
    loss: str = "squared"
    replications: int = 10
    seed: int = 0
    test_factor: int = 10
    max_iters: int = 10000
    workers: int = 1
    force: bool = False

    def __post_init__(self):
        self.schedule = tuple(int(n) for n in self.schedule)
        if self.d < 1 or self.replications < 1 or self.test_factor < 1:
            raise ConfigError("d, replications and test_factor must be positive")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])) or not self.schedule:
            raise ConfigError(f"schedule must be strictly increasing, got {self.schedule}")

    @property
    def phi(self) -> LossSpec:
        phi = parse_loss(self.loss)
        return phi if phi.gamma == 0 else phi.rebuild(gamma=0.0)

    def k_n(self, n):
        return int(_k_rule(self.k_rule)(n, self.d))

    def gamma_n(self, n):
        return float(_gamma_rule(self.gamma_rule, self.phi)(n))

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        out = asdict(self)
        out["schedule"] = list(self.schedule)
        for key in ("k_rule", "gamma_rule"):
            if callable(out[key]):
                out[key] = getattr(out[key], "__name__", "callable")
        return out


def _scaled_cells(d, k, num, den):
    """``num * 2^(d k) / den`` without overflowing for huge ``k``."""
    if num <= 0:
        return 0.0
    e = math.log(num) + d * k * math.log(2.0) - math.log(den)
    return math.exp(e) if e < 700 else math.inf


def _trend(name, values, toward):
    """Does the sequence move toward ``toward`` (0 or inf) across the schedule?"""
    v = [float(x) for x in values]
    if toward == "inf":
        ok = all(b >= a for a, b in zip(v, v[1:])) and v[-1] > v[0]
    else:
        ok = all(math.isfinite(x) for x in v) and all(b <= a for a, b in zip(v, v[1:])) and v[-1] < v[0]
    return {"name": name, "values": v, "terminal": v[-1], "pass": ok}


def check_schedule(cfg: ConsistencyConfig, schedule=None) -> dict:
    """Evaluate the consistency conditions on the schedule's sample sizes.

    Each condition is a sequence that must move monotonically toward its
    limit across the schedule points.  The report is advisory.
    """
    ns = list(schedule or cfg.schedule)
    d = cfg.d
    advisories = []
    if len(ns) < 3:
        advisories.append("need at least 3 schedule points to judge a trend")
    ks = [cfg.k_n(n) for n in ns]
    phi = cfg.phi
    gammas = [cfg.gamma_n(n) for n in ns]
    conds = []
    if any(d * k > GRID_GUARD for k in ks):
        advisories.append(f"d*k_n exceeds the grid guard {GRID_GUARD} at some schedule point")

    conds.append(_trend("k_n -> inf", ks, "inf"))
    if phi.name == "squared":
        conds.append(_trend("k_n 2^(d k_n) / n -> 0", [_scaled_cells(d, k, k, n) for k, n in zip(ks, ns)], 0))
        conds.append(_trend("2^(d k_n) / sqrt(n) -> 0", [_scaled_cells(d, k, 1.0, math.sqrt(n)) for k, n in zip(ks, ns)], 0))
    else:
        # general form with N = 2^(d k_n) cells of volume v_n = 2^(-d k_n), inf g = 1
        conds.append(_trend("log N / (n v_n) -> 0", [_scaled_cells(d, k, d * k * math.log(2), n) for k, n in zip(ks, ns)], 0))
        zeta_vals = []
        for k, n, g in zip(ks, ns, gammas):
            v = 2.0 ** (-d * k) if d * k < 1000 else 0.0
            if phi.alpha > 0 and g == 0:
                a = 2.0 / phi.alpha * phi.xi0_bound + math.sqrt(2.0 * phi.phi_bar / phi.alpha)
                z = phi.zeta(math.sqrt(a / v)) / math.sqrt(n * v) if v > 0 else math.inf
            elif g > 0 and v > 0:
                z = phi.zeta(math.sqrt(2.0 * phi.phi_bar / (v * g))) / math.sqrt(n * v * g)
            else:
                z = math.inf
            zeta_vals.append(z)
        conds.append(_trend("zeta rate -> 0", zeta_vals, 0))
        if phi.alpha <= 0:
            pos = all(g > 0 for g in gammas)
            entry = _trend("gamma_n -> 0", gammas, 0)
            entry["pass"] = entry["pass"] and pos
            conds.append(entry)
    for c in conds:
        if not c["pass"]:
            c["message"] = f"{c['name']} violated"
    return {
        "schedule": ns,
        "k_n": ks,
        "gamma_n": gammas,
        "conditions": conds,
        "advisories": advisories,
        "pass": all(c["pass"] for c in conds) and len(ns) >= 3,
    }


# ------------------------------------------------------------ experiments


@dataclass
class GapCurve:
    """Per sample size: mean test risk over replications, its standard error and the gap to Bayes."""

    bayes: float
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    COLUMNS = ("n", "mean_risk", "se", "bayes", "gap", "k_n", "gamma_n")

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    @property
    def gaps(self):
        return self.column("gap")

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# {CURVE_SCHEMA} {json.dumps(self.config, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["n"], repr(r["mean_risk"]), repr(r["se"]), repr(r["bayes"]), repr(r["gap"]), r["k_n"], repr(r["gamma_n"])])
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv())


def _cell_values(model, grid):
    centers = np.stack(np.unravel_index(np.arange(grid.n_cells), (grid.per_dim,) * grid.d), axis=1)
    return model.predict((centers + 0.5) / grid.per_dim)


def _replication(cfg: ConsistencyConfig, rep: int):
    """Test risks of the boosted predictor at every schedule point for one replication."""
    gen = make_generator(cfg.generator, cfg.sigma)
    phi = cfg.phi
    # one test sample per replication, shared by all n
    X_test, y_test = gen.sample(cfg.test_factor * max(cfg.schedule), cfg.d, np.random.default_rng([cfg.seed, rep, 0]))
    out = []
    for n in cfg.schedule:
        X, y = gen.sample(n, cfg.d, np.random.default_rng([cfg.seed, rep, n]))
        k, g = cfg.k_n(n), cfg.gamma_n(n)
        grid = enumerate_grid_class(cfg.d, k)
        psi = phi.rebuild(gamma=g) if g else phi
        model, trace = run_algorithm1(psi, Measure(X, y), parse_class(f"grid:{k}"), RunConfig(max_iters=cfg.max_iters))
        # grid-tree models are constant on cells: evaluate once per cell center
        F = _cell_values(model, grid)[grid.cell_index(X_test)]
        out.append(float(np.mean(phi.psi(F, y_test))))
    return rep, out


def run_consistency(cfg: ConsistencyConfig) -> GapCurve:
    """Estimate ``E A(F_n)`` per sample size by averaging ``cfg.replications`` runs."""
    report = check_schedule(cfg)
    if not report["pass"] and not cfg.force:
        bad = [c["message"] for c in report["conditions"] if not c["pass"]] + report["advisories"]
        raise ConfigError("schedule fails the consistency conditions: " + "; ".join(bad) + " (use force to override)")
    for n in cfg.schedule:
        enumerate_grid_class(cfg.d, cfg.k_n(n))  # CapacityError before any work
    gen = make_generator(cfg.generator, cfg.sigma)
    bayes = bayes_reference(gen, cfg.phi)

    reps = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = dict(pool.map(_replication, [cfg] * cfg.replications, reps))
    else:
        results = dict(_replication(cfg, r) for r in reps)
    risks = np.array([results[r] for r in reps])  # fixed order by replication key

    curve = GapCurve(bayes, config=cfg.to_dict())
    R = cfg.replications
    for j, n in enumerate(cfg.schedule):
        col = risks[:, j]
        mean = float(np.mean(col))
        se = float(np.std(col, ddof=1) / math.sqrt(R)) if R > 1 else math.nan
        curve.rows.append({
            "n": n,
            "mean_risk": mean,
            "se": se,
            "bayes": bayes,
            "gap": mean - bayes,
            "k_n": cfg.k_n(n),
            "gamma_n": cfg.gamma_n(n),
            "risks": col.tolist(),
        })
    return curve
