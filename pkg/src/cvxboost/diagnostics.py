"""Independent checkers: trace re-verification, a cellwise exact minimizer, step sums.

Nothing here trusts the engine.  :func:`verify_trace` recomputes every margin
from the raw columns of a trace, and :func:`exact_partition_minimizer` solves
the risk minimization over a fixed partition by one-dimensional search, so
boosted models can be compared against the true optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Measure
from .engine import REL_TOL, BoostTrace, certificate_tolerance
from .exceptions import ConfigError, EmptyDataset, SchemaError, UnboundedError
from .learners import GridPartition
from .losses import LossSpec, check_assumptions, kappa, norm_bound, risk, subgrad_values

__all__ = [
    "PartitionMinimum",
    "assumption_report",
    "certificate_tolerance",
    "exact_partition_minimizer",
    "step_summary",
    "sum_square_steps",
    "verify_trace",
]

assumption_report = check_assumptions


# ------------------------------------------------------------ trace checks


def _check(name, margins, tol):
    """Entry for one inequality ``margin >= -tol`` evaluated row by row.

    ``row`` is the 1-based position of the first failing data row, or of the
    tightest row when everything passes.
    """
    margins = np.asarray(margins, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), margins.shape)
    if margins.size == 0:
        return {"name": name, "pass": True, "worst_margin": None, "row": None}
    # NaN margins count as failures
    bad = np.flatnonzero(~(margins >= -tol))
    worst = int(np.nanargmin(margins)) if np.isfinite(margins).any() else 0
    row = int(bad[0]) if bad.size else worst
    return {
        "name": name,
        "pass": not bad.size,
        "worst_margin": float(margins[worst]),
        "row": row + 1,
    }


def verify_trace(trace: BoostTrace, loss: LossSpec, L: float | None = None) -> dict:
    """Re-check every certificate a trace must satisfy.

    ``L`` defaults to the constant stored in the trace header, then to the
    catalog constant of ``loss``.
    """
    if len(trace) < 1:
        raise SchemaError("trace has no rows", "row")
    algo = trace.meta.get("algorithm")
    if algo not in (1, 2):
        raise SchemaError(f"unknown algorithm tag {algo!r}", "algorithm")
    L = L if L is not None else trace.meta.get("L", loss.lipschitz_L)
    if L is None:
        raise ConfigError(f"no Lipschitz constant for {loss.describe()}; pass L explicitly")

    C = trace.column("risk")
    step = trace.column("step")
    fn = trace.column("f_norm")
    inner = trace.column("inner_prod")
    prev, dec = C[:-1], C[:-1] - C[1:]
    tol = certificate_tolerance(prev)
    a, fn1, in1 = step[1:], fn[1:], inner[1:]

    def shift(entry):
        # margins on transitions t-1 -> t are reported against row t
        if entry["row"] is not None:
            entry["row"] += 1
        return entry

    checks = [shift(_check("risk_nonincreasing", dec, tol))]
    if algo == 1:
        checks.append(shift(_check("decrease_bound", dec - L * a * a, tol)))
        checks.append(shift(_check("step_nonincreasing", step[:-1] - step[1:], 0.0)))
        checks.append(_check("step_nonnegative", step, 0.0))
    else:
        nu = trace.meta.get("nu", step[0])
        checks.append(shift(_check("decrease_bound", dec - 0.5 * a * (1.0 - 2.0 * a * L) * fn1 * fn1, tol)))
        checks.append(_check("step_constant", -np.abs(step - nu), 0.0))
    checks.append(shift(_check("descent_inequality", dec + a * a * L * fn1 * fn1 + a * in1, tol)))

    k = trace.meta.get("kappa")
    if loss.alpha > 0 and k is not None:
        Fn = trace.column("F_norm")
        if np.isfinite(Fn).all():
            bound = np.array([norm_bound(loss, k, c) for c in C])
            checks.append(_check("norm_bound", bound - Fn, REL_TOL))

    return {
        "algorithm": algo,
        "loss": loss.describe(),
        "L": L,
        "rows": len(trace),
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }


# ---------------------------------------------------------------- steps


def sum_square_steps(steps) -> float:
    """Partial sum of squared steps.

    Accepts a step sequence or an Algorithm 1 trace (whose row 0 holds ``w_0``,
    which is not a step taken and is skipped).
    """
    if isinstance(steps, BoostTrace):
        steps = steps.column("step")[1:]
    s = np.asarray(steps, dtype=float)
    return float(np.dot(s, s))


def step_summary(trace: BoostTrace) -> dict:
    s = trace.column("step")
    taken = s[1:]
    if taken.size == 0:
        return {"w0": float(s[0]), "sum_sq": 0.0, "last_step": float(s[0]), "last_quarter_share": 0.0, "steps": 0}
    sq = np.cumsum(taken * taken)
    q = 3 * taken.size // 4
    before = sq[q - 1] if q > 0 else 0.0
    total = float(sq[-1])
    return {
        "w0": float(s[0]),
        "sum_sq": total,
        "last_step": float(taken[-1]),
        "last_quarter_share": float((total - before) / total) if total > 0 else 0.0,
        "steps": int(taken.size),
    }


# --------------------------------------------------- exact partition optimum

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_X_TOL = 1e-12


@dataclass
class PartitionMinimum:
    """Cellwise minimizer. ``values[j]`` is NaN for cells with no mass."""

    values: np.ndarray
    labels: np.ndarray
    risk: float
    F: np.ndarray
    sandwich: np.ndarray

    def predict_cells(self, labels):
        return self.values[np.asarray(labels)]


class _Cell:
    def __init__(self, loss, m):
        self.loss, self.m = loss, m

    def objective(self, a):
        return risk(self.loss, self.m, float(a))

    def slope(self, a):
        return float(np.dot(self.m.weights, subgrad_values(self.loss, self.m, float(a))))


def _bracket(cell, loss):
    """Interval ``[-R, R]`` that contains the cell minimizer."""
    if loss.alpha > 0:
        k = kappa(loss, cell.m)
        R = norm_bound(loss, k, cell.objective(0.0))
        R = R * (1.0 + 1e-6) + 1e-9
        if cell.slope(-R) <= 0 <= cell.slope(R):
            return R
    # no usable bound: expand until the subgradient changes sign strictly, since
    # a slope that underflows to zero far out is how a missing minimizer shows up
    R = 1.0
    for _ in range(64):
        if cell.slope(-R) < 0 < cell.slope(R):
            return R
        R *= 2.0
    raise UnboundedError(f"{loss.describe()} has no minimizer on a cell (subgradient keeps one sign)")


def _golden(f, lo, hi, tol):
    c, d = hi - _INV_PHI * (hi - lo), lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol * (1.0 + abs(lo) + abs(hi)):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
        if hi - lo < 1e-7 * (1.0 + abs(lo)):
            break  # function values are flat at this scale, bisection takes over
    return lo, hi


def _bisect_slope(cell, lo, hi):
    """Shrink ``[lo, hi]`` with ``slope(lo) <= 0 <= slope(hi)`` to a point."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= _X_TOL * (1.0 + abs(mid)) * 1e-4:
            break
        s = cell.slope(mid)
        if s == 0.0:
            return mid
        if s < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_cell(cell, loss):
    R = _bracket(cell, loss)
    lo, hi = _golden(cell.objective, -R, R, _X_TOL)
    if not (cell.slope(lo) <= 0 <= cell.slope(hi)):
        lo, hi = -R, R
    return _bisect_slope(cell, lo, hi)


def _labels(partition, m):
    if isinstance(partition, GridPartition):
        return partition.cell_index(m.X), partition.n_cells
    labels = np.asarray(partition)
    if labels.shape != (m.n,) or not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0:
        raise SchemaError("partition must be a GridPartition or one nonnegative integer label per sample")
    return labels.astype(np.int64), int(labels.max()) + 1


def exact_partition_minimizer(loss: LossSpec, m: Measure, partition) -> PartitionMinimum:
    """Minimize ``C`` over functions constant on each cell of ``partition``.

    The problem separates across cells.  Each scalar problem is bracketed by
    the iterate norm bound applied to the cell's conditional measure (or by
    expansion when ``alpha = 0``), narrowed by golden-section search and
    finished by bisection on the sign of the subgradient.
    """
    labels, n_cells = _labels(partition, m)
    values = np.full(n_cells, np.nan)
    sandwich = np.full(n_cells, np.nan)
    for j in np.unique(labels):
        mask = labels == j
        try:
            sub = m.restrict(mask)
        except EmptyDataset:
            continue  # zero-weight cell: risk does not depend on its value
        cell = _Cell(loss, sub)
        a = _solve_cell(cell, loss)
        values[j] = a
        eps = 1e-9 * (1.0 + abs(a))
        # optimality sandwich: left slope <= 0 <= right slope
        sandwich[j] = min(-cell.slope(a - eps), cell.slope(a + eps))
    F = np.where(np.isnan(values[labels]), 0.0, values[labels])
    return PartitionMinimum(values, labels, risk(loss, m, F), F, sandwich)
