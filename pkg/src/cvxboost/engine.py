"""The two boosting loops, the additive model they build and their traces.

``run_algorithm1``
    adaptive steps over sign-leaf trees::

        f_{t+1} = argmax_f  -E xi(F_t(X), Y) f(X)
        w_{t+1} = min(w_t, -E xi(F_t(X), Y) f_{t+1}(X) / (2L))
        F_{t+1} = F_t + w_{t+1} f_{t+1}

``run_algorithm2``
    fixed step ``nu`` over free-leaf trees fitted to ``-xi`` by least squares,
    with ``0 < nu < 1/(2L)``.

Every iteration re-checks the per-step risk decrease guaranteed by theory
(``L w^2`` for the adaptive rule, ``nu/2 (1 - 2 nu L) ||f||^2`` for the
fixed step), the one-step descent inequality and, for strongly convex
losses, the iterate norm bound.  A violation means a bug and aborts the run
with a :class:`CertificateError`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Measure, norm_muX, values_at
from .exceptions import AssumptionError, CertificateError, ConfigError, DimensionError, SchemaError
from .learners import FREE, SIGN, Tree, WeakClassConfig, fit_ls_tree, select_direction_F
from .losses import LossSpec, kappa, norm_bound, resolve_lipschitz, risk, subgrad_values

log = logging.getLogger(__name__)

MODEL_SCHEMA = "cvxboost-model/1"
TRACE_SCHEMA = "cvxboost-trace/1"
REL_TOL = 1e-9


def certificate_tolerance(c):
    """Slack allowed on every certificate: ``1e-9 * (1 + |C|)``."""
    return REL_TOL * (1.0 + abs(c))


# ------------------------------------------------------------------- model


class AdditiveModel:
    """``F(x) = F_0(x) + sum_k w_k f_k(x)``."""

    def __init__(self, n_features, f0=None, terms=None, algorithm=None, loss=None):
        self.n_features = int(n_features)
        self.f0 = f0
        self.terms = list(terms or [])
        self.algorithm = algorithm
        self.loss = loss

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.shape[0] == self.n_features else X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"model expects {self.n_features} features, got shape {X.shape}")
        return X

    def predict(self, X):
        # same summation order as the engine's running values, so results are bit-identical
        X = self._check(X)
        F = self.f0.predict(X) if self.f0 is not None else np.zeros(X.shape[0])
        for w, tree in self.terms:
            F = F + w * tree.predict(X)
        return F

    def classify(self, X):
        return np.where(self.predict(X) > 0, 1.0, -1.0)

    def __add__(self, other):
        if other.n_features != self.n_features:
            raise DimensionError("cannot add models over different feature spaces")
        return AdditiveModel(self.n_features, self.f0, self.terms + other.terms, self.algorithm, self.loss)

    def to_dict(self):
        return {
            "schema": MODEL_SCHEMA,
            "algorithm": self.algorithm,
            "loss": self.loss,
            "n_features": self.n_features,
            "f0": None if self.f0 is None else self.f0.to_dict(),
            "terms": [{"w": float(w), "tree": t.to_dict()} for w, t in self.terms],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data):
        if data.get("schema") != MODEL_SCHEMA:
            raise SchemaError(f"unsupported model schema {data.get('schema')!r}", "schema")
        f0 = None if data.get("f0") is None else Tree.from_dict(data["f0"])
        terms = [(float(t["w"]), Tree.from_dict(t["tree"])) for t in data["terms"]]
        return cls(data["n_features"], f0, terms, data.get("algorithm"), data.get("loss"))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"AdditiveModel(algorithm={self.algorithm}, terms={len(self.terms)})"


def predict(model: AdditiveModel, x):
    """Value of ``model`` at a single point (or rows of a matrix)."""
    out = model.predict(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def classify(model: AdditiveModel, x):
    """+1 where the model is strictly positive, -1 otherwise (including at 0)."""
    out = model.classify(x)
    return float(out[0]) if np.ndim(x) == 1 else out


# ------------------------------------------------------------------- trace

TRACE_COLUMNS = ("t", "risk", "step", "f_norm", "inner_prod", "margin", "F_norm")


@dataclass
class BoostTrace:
    """Per-iteration record.  Row ``t`` describes ``F_t``; row 0 is the start.

    ``step`` is ``w_t`` (row 0 holds ``w_0``) or ``nu``; ``inner_prod`` is
    ``E xi(F_{t-1}(X), Y) f_t(X)``.
    """

    meta: dict
    rows: dict = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})

    @property
    def algorithm(self):
        return self.meta["algorithm"]

    @property
    def margin_column(self):
        return "margin31" if self.algorithm == 1 else "margin32"

    def append(self, **row):
        for c in TRACE_COLUMNS:
            self.rows[c].append(row[c])

    def column(self, name):
        name = "margin" if name in ("margin31", "margin32") else name
        return np.asarray(self.rows[name], dtype=float)

    def __len__(self):
        return len(self.rows["t"])

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# {TRACE_SCHEMA} {json.dumps(self.meta, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "risk", "step", "f_norm", "inner_prod", self.margin_column, "F_norm"]
        w.writerow(header)
        for i in range(len(self)):
            w.writerow([self.rows["t"][i]] + [repr(float(self.rows[c][i])) for c in TRACE_COLUMNS[1:]])
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            head = lines[0][1:].strip()
            tag, _, blob = head.partition(" ")
            if tag != TRACE_SCHEMA:
                raise SchemaError(f"unsupported trace schema {tag!r}", "schema")
            try:
                meta = json.loads(blob)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"malformed trace header: {exc}", "header") from None
            lines = lines[1:]
        reader = csv.reader(lines)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("trace has no header row", "header") from None
        if len(header) < 6 or header[:5] != ["t", "risk", "step", "f_norm", "inner_prod"] or header[5] not in ("margin31", "margin32"):
            raise SchemaError(f"unexpected trace columns {header}", "header")
        meta.setdefault("algorithm", 1 if header[5] == "margin31" else 2)
        trace = cls(meta)
        for k, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"row {k} has {len(row)} fields", "row")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise SchemaError(f"row {k} is not numeric", "row") from None
            rec = dict(zip(("t", "risk", "step", "f_norm", "inner_prod", "margin"), vals[:6]))
            rec["t"] = int(rec["t"])
            rec["F_norm"] = vals[6] if len(vals) > 6 else math.nan
            trace.append(**rec)
        if len(trace) == 0:
            raise SchemaError("trace has no rows", "row")
        return trace

    @classmethod
    def load(cls, path):
        return cls.from_csv(Path(path).read_text())


@dataclass
class RunConfig:
    """Loop controls. ``T``, the floors and ``w0`` are recorded in the trace header."""

    max_iters: int = 10000
    w0: float = 1.0
    nu: float | None = None
    step_floor: float = 1e-12
    norm_floor: float = 1e-12
    f0: Tree | None = None
    abort_on_violation: bool = True


# ------------------------------------------------------------------ loops


class _Loop:
    """State shared by both algorithms: running values, risk and certificate checks."""

    def __init__(self, algorithm, loss, m, cfg, rc, L):
        self.loss, self.m, self.rc, self.L = loss, m, rc, L
        self.F = values_at(rc.f0, m) if rc.f0 is not None else np.zeros(m.n)
        self.C = risk(loss, m, self.F)
        self.kappa = kappa(loss, m) if loss.alpha > 0 else None
        self.model = AdditiveModel(m.d, rc.f0, [], algorithm, loss.describe())
        self.meta = {
            "algorithm": algorithm,
            "loss": loss.describe(),
            "L": L,
            "alpha": loss.alpha,
            "kappa": self.kappa,
            "weak_class": cfg.describe(),
            "n": m.n,
            "d": m.d,
            "measure": m.kind,
            "halfwidth": m.halfwidth,
            "max_iters": rc.max_iters,
            "step_floor": rc.step_floor,
            "norm_floor": rc.norm_floor,
        }
        self.trace = BoostTrace(self.meta)
        self.worst = {"decrease": math.inf, "descent": math.inf, "norm_bound": math.inf}

    def F_norm(self):
        return math.sqrt(float(np.dot(self.m.weights, self.F * self.F)))

    def start(self, step):
        self.trace.append(t=0, risk=self.C, step=step, f_norm=0.0, inner_prod=0.0, margin=0.0, F_norm=self.F_norm())
        self._check_norm(0)

    def _check_norm(self, t):
        if self.kappa is None:
            return
        bound = norm_bound(self.loss, self.kappa, self.C)
        margin = bound - self.F_norm()
        self.worst["norm_bound"] = min(self.worst["norm_bound"], margin)
        if margin < -REL_TOL:
            self._violation("iterate norm bound", t, lhs=self.F_norm(), rhs=bound)

    def step(self, t, a, direction, f_norm, inner, required):
        """Apply ``F += a f`` and verify ``C(F_t) - C(F_{t+1}) >= required``."""
        F_new = self.F + a * direction.values
        if self.loss.cap is not None and np.max(np.abs(F_new)) > self.loss.cap:
            raise AssumptionError(
                f"iterate left [-{self.loss.cap}, {self.loss.cap}] where the exponential loss constant holds"
            )
        C_new = risk(self.loss, self.m, F_new)
        decrease = self.C - C_new
        tol = certificate_tolerance(self.C)
        margin = decrease - required
        descent_margin = decrease + a * a * self.L * f_norm * f_norm + a * inner
        self.worst["decrease"] = min(self.worst["decrease"], margin)
        self.worst["descent"] = min(self.worst["descent"], descent_margin)
        if margin < -tol:
            self._violation("risk decrease", t, lhs=decrease, rhs=required, C_prev=self.C, C_next=C_new, step=a)
        if descent_margin < -tol:
            self._violation("one-step descent inequality", t, lhs=decrease,
                            rhs=-a * a * self.L * f_norm * f_norm - a * inner)
        self.F, self.C = F_new, C_new
        self.model.terms.append((a, direction.tree))
        self.trace.append(t=t, risk=C_new, step=a, f_norm=f_norm, inner_prod=inner, margin=margin, F_norm=self.F_norm())
        self._check_norm(t)

    def _violation(self, what, t, **details):
        details["iteration"] = t
        msg = f"{what} certificate violated at iteration {t}: " + ", ".join(f"{k}={v!r}" for k, v in details.items())
        log.error(msg)
        if self.rc.abort_on_violation:
            raise CertificateError(msg, details)

    def finish(self, reason, t):
        self.meta["stop_reason"] = reason
        self.meta["iterations"] = t
        self.meta["worst_margins"] = {k: (None if math.isinf(v) else v) for k, v in self.worst.items()}
        return self.model, self.trace


def run_algorithm1(loss: LossSpec, m: Measure, cfg: WeakClassConfig, rc: RunConfig | None = None):
    """Boost over sign-leaf trees with the adaptive nonincreasing step rule.

    Stops when the best direction is the zero tree (``F_t`` is then optimal
    over the span of the class), when the step drops below
    ``rc.step_floor``, or after ``rc.max_iters`` iterations.
    """
    rc = rc or RunConfig()
    if not rc.w0 > 0:
        raise ConfigError(f"w0 must be > 0, got {rc.w0}")
    L = resolve_lipschitz(loss, m)
    cfg = cfg if cfg.leaf == SIGN else cfg.with_leaf(SIGN)
    loop = _Loop(1, loss, m, cfg, rc, L)
    loop.meta["w0"] = rc.w0
    loop.start(rc.w0)
    w = rc.w0
    search = None
    for t in range(1, rc.max_iters + 1):
        g = subgrad_values(loss, m, loop.F)
        direction = select_direction_F(cfg, m, -g)
        search = direction.search
        if direction.objective <= 0.0:
            loop.meta["search"] = search
            return loop.finish("stationary", t - 1)
        w = min(w, direction.objective / (2.0 * L))
        f_norm = norm_muX(m, direction.values)
        loop.step(t, w, direction, f_norm, -direction.objective, L * w * w)
        if w < rc.step_floor:
            loop.meta["search"] = search
            return loop.finish("step_floor", t)
    loop.meta["search"] = search
    return loop.finish("max_iters", rc.max_iters)


def nu_bound(L):
    return 1.0 / (2.0 * L)


def run_algorithm2(loss: LossSpec, m: Measure, cfg: WeakClassConfig, rc: RunConfig):
    """Boost over free-leaf trees fitted to ``-xi`` by least squares, fixed step ``nu``."""
    L = resolve_lipschitz(loss, m)
    nu = rc.nu
    if nu is None or not 0 < nu < nu_bound(L):
        raise ConfigError(f"algorithm 2 requires nu < {nu_bound(L):g} (0 < nu < 1/(2L), L = {L:g}); got nu = {nu}")
    cfg = cfg if cfg.leaf == FREE else cfg.with_leaf(FREE)
    loop = _Loop(2, loss, m, cfg, rc, L)
    loop.meta["nu"] = nu
    if loss.alpha <= 0:
        warnings.warn(f"{loss.describe()} is not strongly convex; the fixed-step convergence hypothesis is unmet")
        loop.meta["hypothesis_unmet"] = "alpha <= 0"
    loop.start(nu)
    for t in range(1, rc.max_iters + 1):
        g = subgrad_values(loss, m, loop.F)
        direction = fit_ls_tree(cfg, m, -g)
        loop.meta["search"] = direction.search
        if direction.tree.is_zero:
            return loop.finish("stationary", t - 1)
        f_norm = norm_muX(m, direction.values)
        inner = float(np.dot(m.weights * g, direction.values))
        loop.step(t, nu, direction, f_norm, inner, 0.5 * nu * (1.0 - 2.0 * nu * L) * f_norm * f_norm)
        if f_norm < rc.norm_floor:
            return loop.finish("norm_floor", t)
    return loop.finish("max_iters", rc.max_iters)
