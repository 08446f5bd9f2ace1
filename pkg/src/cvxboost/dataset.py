"""Samples, empirical and Y-smoothed measures, expectations and L2(mu_X) norms.

A :class:`Measure` is the distribution every risk, subgradient and norm in the
package is taken against.  Two kinds exist:

``Empirical``
    point masses at the sample pairs with weights summing to one.
``SmoothedY(h)``
    each response ``Y_i`` is replaced by ``Y_i + h U`` with ``U`` uniform on
    ``[-1, 1]``.  The conditional law of Y given X then has a density bounded
    by ``1 / (2h)``, which is what makes non-differentiable losses such as the
    absolute loss usable with a finite Lipschitz constant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import EmptyDataset, NumericalError, ParseError, SchemaError

# 16-point Gauss-Legendre rule on [-1, 1]; weights rescaled to the uniform density.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_WEIGHTS = _GL_WEIGHTS / 2.0

WEIGHT_TOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class Measure:
    """Weighted sample measure, optionally smoothed in the response direction.

    Parameters
    ----------
    X : array-like of shape (n, d)
    y : array-like of shape (n,)
    weights : array-like of shape (n,), optional
        Nonnegative, summing to one. Defaults to uniform ``1/n``.
    halfwidth : float, optional
        Half-width ``h`` of the uniform Y-kernel. ``None`` means empirical.
    """

    def __init__(self, X, y, weights=None, halfwidth=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise SchemaError(f"X has shape {X.shape} but y has {y.shape[0]} entries")
        n = X.shape[0]
        if n == 0:
            raise EmptyDataset("a measure needs at least one sample")
        if X.shape[1] < 1:
            raise SchemaError("samples need at least one feature")
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1) | ~np.isfinite(y))
        if bad.size:
            raise NumericalError("non-finite sample", int(bad[0]))
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != (n,) or (weights < 0).any():
            raise SchemaError("weights must be nonnegative with one entry per sample")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise SchemaError(f"weights sum to {weights.sum()!r}, expected 1")
        if halfwidth is not None and not halfwidth > 0:
            raise SchemaError(f"smoothing half-width must be > 0, got {halfwidth}")
        self.X = _readonly(X)
        self.y = _readonly(y)
        self.weights = _readonly(weights)
        self.halfwidth = None if halfwidth is None else float(halfwidth)
        self._cache = {}

    @classmethod
    def empirical(cls, X, y, weights=None):
        return cls(X, y, weights)

    @classmethod
    def smoothed(cls, X, y, halfwidth, weights=None):
        return cls(X, y, weights, halfwidth=halfwidth)

    @property
    def kind(self):
        return "Empirical" if self.halfwidth is None else "SmoothedY"

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def density_bound(self):
        """Bound on the conditional density of Y given X, or None."""
        return None if self.halfwidth is None else 1.0 / (2.0 * self.halfwidth)

    def kernel(self):
        """Offsets and weights of the Y-kernel quadrature: (u_k, q_k) pairs."""
        if self.halfwidth is None:
            return np.zeros(1), np.ones(1)
        return self.halfwidth * _GL_NODES, _GL_WEIGHTS

    def sorted_order(self, dim):
        """Stable argsort of feature ``dim``; cached since the measure is immutable."""
        key = ("order", dim)
        if key not in self._cache:
            self._cache[key] = np.argsort(self.X[:, dim], kind="stable")
        return self._cache[key]

    def cached(self, key, factory):
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]

    def restrict(self, mask):
        """Conditional measure on the samples selected by ``mask`` (renormalized)."""
        w = self.weights[mask]
        total = w.sum()
        if total <= 0:
            raise EmptyDataset("restriction carries zero mass")
        return Measure(self.X[mask], self.y[mask], w / total, self.halfwidth)

    def __repr__(self):
        h = "" if self.halfwidth is None else f", h={self.halfwidth}"
        return f"Measure({self.kind}, n={self.n}, d={self.d}{h})"


def _check_finite(values, what):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalError(f"non-finite {what}", int(bad[0]))
    return values


def kernel_mean(m: Measure, h: Callable) -> np.ndarray:
    """Per-sample kernel averages ``E_U h(X_i, Y_i + hU)``; exact values when empirical."""
    offsets, q = m.kernel()
    acc = np.zeros(m.n)
    for u, qk in zip(offsets, q):
        acc += qk * np.broadcast_to(np.asarray(h(m.X, m.y + u), dtype=float), (m.n,))
    return _check_finite(acc, "integrand")


def expect(m: Measure, h: Callable) -> float:
    """Expectation of ``h(X, Y)`` under ``m``.

    ``h`` is called with the full design matrix ``X`` (n, d) and a response
    vector (n,) and must return one value per sample.
    """
    value = float(np.dot(m.weights, kernel_mean(m, h)))
    if not math.isfinite(value):
        raise NumericalError("non-finite expectation")
    return value


def values_at(F, m: Measure) -> np.ndarray:
    """Evaluate ``F`` at the sample points of ``m``.

    ``F`` may be a scalar, an array of per-sample values, an object with a
    ``predict`` method, or a callable taking the design matrix.
    """
    if np.isscalar(F):
        return np.full(m.n, float(F))
    if isinstance(F, np.ndarray) and F.ndim == 1:
        if F.shape[0] != m.n:
            raise SchemaError(f"{F.shape[0]} values for {m.n} samples")
        return F.astype(float, copy=False)
    if hasattr(F, "predict"):
        return np.asarray(F.predict(m.X), dtype=float)
    return np.asarray(F(m.X), dtype=float)


def norm_muX(m: Measure, F) -> float:
    """Norm of ``F`` in L2(mu_X)."""
    v = values_at(F, m)
    return math.sqrt(float(np.dot(m.weights, v * v)))


def inner_muX(m: Measure, F, G) -> float:
    return float(np.dot(m.weights, values_at(F, m) * values_at(G, m)))


# --------------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class Schema:
    features: Sequence | None = None
    target: str | int | None = None
    task: str = "regression"

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise SchemaError(f"unknown task {self.task!r}", "task")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = "regression"
    feature_names: list = field(default_factory=list)
    target_name: str = "y"

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def measure(self, halfwidth=None, weights=None) -> Measure:
        return Measure(self.X, self.y, weights, halfwidth)

    def summary(self) -> dict:
        y = self.y
        return {
            "schema": "cvxboost-dataset/1",
            "n": int(self.n),
            "d": int(self.d),
            "task": self.task,
            "target": {
                "name": self.target_name,
                "mean": float(y.mean()),
                "std": float(y.std()),
                "min": float(y.min()),
                "max": float(y.max()),
            },
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _resolve_column(spec, header, ncols):
    if isinstance(spec, int) or (isinstance(spec, str) and spec.lstrip("-").isdigit() and spec not in header):
        idx = int(spec)
        if idx < 0:
            idx += ncols
        if not 0 <= idx < ncols:
            raise SchemaError("index out of range", spec)
        return idx
    if spec in header:
        return header.index(spec)
    raise SchemaError("no such column", spec)


def load_csv(path, schema: Schema | None = None) -> Dataset:
    """Read a comma-separated numeric file into a :class:`Dataset`.

    The header row is optional and detected by the presence of a non-numeric
    field. The target defaults to the last column and the features to all the
    others. Empty fields are rejected.
    """
    schema = schema or Schema()
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyDataset(f"{path} is empty")

    first_line, first = rows[0]
    header = None
    if not all(_is_number(c.strip()) for c in first if c.strip()):
        header = [c.strip() for c in first]
        rows = rows[1:]
    if not rows:
        raise EmptyDataset(f"{path} has a header but no data rows")

    ncols = len(header) if header else len(rows[0][1])
    names = header or [f"x{j}" for j in range(ncols)]
    tcol = _resolve_column(schema.target if schema.target is not None else ncols - 1, names, ncols)
    if schema.features is None:
        fcols = [j for j in range(ncols) if j != tcol]
    else:
        fcols = [_resolve_column(f, names, ncols) for f in schema.features]
    if not fcols:
        raise SchemaError("no feature columns", "features")
    if tcol in fcols:
        raise SchemaError("target also listed as a feature", names[tcol])

    data = np.empty((len(rows), ncols))
    for r, (line, row) in enumerate(rows):
        if len(row) != ncols:
            raise ParseError(f"expected {ncols} fields, found {len(row)}", line)
        for j, tok in enumerate(row):
            tok = tok.strip()
            if not tok:
                raise ParseError(f"missing value in column {names[j]!r}", line)
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"cannot parse {tok!r} as a number", line) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {tok!r}", line)
            data[r, j] = v

    y = data[:, tcol].copy()
    if schema.task == "classification":
        bad = np.flatnonzero((y != 1.0) & (y != -1.0))
        if bad.size:
            raise SchemaError(f"classification labels must be -1 or +1, found {y[bad[0]]!r}", names[tcol])
    return Dataset(
        X=data[:, fcols].copy(),
        y=y,
        task=schema.task,
        feature_names=[names[j] for j in fcols],
        target_name=names[tcol],
    )
