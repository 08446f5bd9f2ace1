"""Convex loss catalog with the constants the convergence theory consumes.

Each entry is a :class:`LossSpec` bundling the loss ``psi(x, y)``, a
subgradient ``xi(x, y)`` in ``x`` and the constants:

* ``alpha`` -- strong convexity modulus of ``psi(., y)``;
* ``lipschitz_L`` -- Lipschitz constant of the (conditional) subgradient;
* ``zeta(p)`` -- local Lipschitz modulus of ``psi(., y)`` on ``[-p, p]``;
* ``phi_bar`` -- ``sup_y psi(0, y)``.

Penalized variants add ``gamma * x**2`` which raises ``alpha`` and ``L`` by
``2 * gamma``.  Classification losses assume labels in ``{-1, +1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from .dataset import Measure, kernel_mean, values_at
from .exceptions import AssumptionError, ConfigError, NumericalError

LN2 = math.log(2.0)
# max of sech(u)^2 * |tanh(u)| over u, attained at tanh(u) = 1/sqrt(3)
_SECH2_TANH_MAX = 2.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class LossSpec:
    name: str
    psi: Callable
    xi: Callable
    alpha: float
    lipschitz_L: float | None
    gamma: float
    smooth: bool
    zeta: Callable
    phi_bar: float
    xi0_bound: float
    task: str = "regression"
    params: dict = field(default_factory=dict)
    cap: float | None = None
    # closed forms of E_U psi(x, y + hU) and E_U xi(x, y + hU); args (x, y, h)
    smoothed_psi: Callable | None = None
    smoothed_xi: Callable | None = None
    needs_density: bool = False
    # L as a function of (explicit density bound B, smoothing half-width h)
    lipschitz_from_density: Callable | None = None

    def describe(self):
        p = ",".join(f"{k}={v!r}" for k, v in sorted(self.params.items()) if v is not None)
        return f"{self.name}:{p}" if p else self.name

    def rebuild(self, **changes):
        params = {**self.params, **changes}
        return CATALOG[self.name](**params)

    def __repr__(self):
        return f"LossSpec({self.describe()})"


# ---------------------------------------------------------------- constructors


def Squared(gamma=0.0, y_bound=None):
    """``(y - x)^2 + gamma x^2``: 2(1+gamma)-strongly convex, 2(1+gamma)-smooth."""
    g = _nonneg(gamma, "gamma")
    yb = math.inf if y_bound is None else float(y_bound)
    return LossSpec(
        name="squared",
        psi=lambda x, y: (y - x) ** 2 + g * x * x,
        xi=lambda x, y: 2.0 * (x - y) + 2.0 * g * x,
        alpha=2.0 + 2.0 * g,
        lipschitz_L=2.0 + 2.0 * g,
        gamma=g,
        smooth=True,
        zeta=lambda p: 2.0 * p + 2.0 * yb + 2.0 * g * p,
        phi_bar=yb * yb,
        xi0_bound=2.0 * yb,
        params={"gamma": g, "y_bound": y_bound},
    )


def _abs_smoothed_psi(g):
    def f(x, y, h):
        z = (x - y) / h
        inside = np.abs(z) <= 1.0
        e = np.where(inside, 0.5 * (1.0 + z * z), np.abs(z))
        return h * e + g * x * x

    return f


def AbsolutePenalized(gamma=0.0, B=None, y_bound=None):
    """``|y - x| + gamma x^2`` with ``sgn(0) = 0``.

    Not differentiable, so its Lipschitz constant ``2 (B + gamma)`` needs a
    bound ``B`` on the conditional density of Y given X: either given
    explicitly or taken from a Y-smoothed measure.
    """
    g = _nonneg(gamma, "gamma")
    yb = math.inf if y_bound is None else float(y_bound)
    return LossSpec(
        name="absolute",
        psi=lambda x, y: np.abs(y - x) + g * x * x,
        xi=lambda x, y: np.sign(x - y) + 2.0 * g * x,
        alpha=2.0 * g,
        lipschitz_L=None if B is None else 2.0 * (float(B) + g),
        gamma=g,
        smooth=False,
        zeta=lambda p: 1.0 + 2.0 * g * p,
        phi_bar=yb,
        xi0_bound=1.0,
        params={"gamma": g, "B": B, "y_bound": y_bound},
        smoothed_psi=_abs_smoothed_psi(g),
        smoothed_xi=lambda x, y, h: np.clip((x - y) / h, -1.0, 1.0) + 2.0 * g * x,
        needs_density=True,
        lipschitz_from_density=lambda B_, h: 2.0 * (B_ + g),
    )


def _logit_phi(u):
    return np.logaddexp(0.0, -u) / LN2


def LogitPenalized(gamma=0.0):
    """``log2(1 + exp(-y x)) + gamma x^2``."""
    g = _nonneg(gamma, "gamma")
    return LossSpec(
        name="logit",
        psi=lambda x, y: _logit_phi(y * x) + g * x * x,
        xi=lambda x, y: -y * expit(-y * x) / LN2 + 2.0 * g * x,
        alpha=2.0 * g,
        lipschitz_L=1.0 / (4.0 * LN2) + 2.0 * g,
        gamma=g,
        smooth=True,
        zeta=lambda p: 1.0 / LN2 + 2.0 * g * p,
        phi_bar=1.0,
        xi0_bound=1.0 / (2.0 * LN2),
        task="classification",
        params={"gamma": g},
    )


def ExponentialPenalized(gamma=0.0, M=30.0):
    """``exp(-y x) + gamma x^2``; its smoothness constant only holds on ``|x| <= M``."""
    g = _nonneg(gamma, "gamma")
    M = float(M)
    if not M > 0:
        raise ConfigError("exponential cap M must be positive")
    return LossSpec(
        name="exponential",
        psi=lambda x, y: np.exp(-y * x) + g * x * x,
        xi=lambda x, y: -y * np.exp(-y * x) + 2.0 * g * x,
        alpha=2.0 * g,
        lipschitz_L=math.exp(M) + 2.0 * g,
        gamma=g,
        smooth=True,
        zeta=lambda p: math.exp(p) + 2.0 * g * p,
        phi_bar=1.0,
        xi0_bound=1.0,
        task="classification",
        params={"gamma": g, "M": M},
        cap=M,
    )


def _hinge_interval(x, y, h):
    # u-interval of [-1, 1] on which 1 - (y + h u) x > 0
    a = 1.0 - y * x
    b = h * x
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.clip(a / b, -1.0, 1.0)
    lo = np.where(b > 0, -1.0, np.where(b < 0, r, np.where(a > 0, -1.0, 1.0)))
    hi = np.where(b > 0, r, 1.0)
    return a, b, lo, hi


def _hinge_smoothed_psi(g):
    def f(x, y, h):
        a, b, lo, hi = _hinge_interval(x, y, h)
        return 0.5 * (a * (hi - lo) - 0.5 * b * (hi * hi - lo * lo)) + g * x * x

    return f


def _hinge_smoothed_xi(g):
    def f(x, y, h):
        _, _, lo, hi = _hinge_interval(x, y, h)
        return -0.5 * (y * (hi - lo) + 0.5 * h * (hi * hi - lo * lo)) + 2.0 * g * x

    return f


def HingePenalized(gamma=0.0, B=None):
    """``max(1 - y x, 0) + gamma x^2``.

    With an explicit density bound ``B`` the constant is ``2 (B + gamma)``.
    Under Y-smoothing of half-width ``h`` the averaged subgradient is
    Lipschitz with constant ``(1 + h)^3 / (2h) + 2 gamma``: the kink sits at
    ``u* = (1 - y x) / (h x)``, where ``|y + h u*| = 1/|x| <= 1 + h``.
    """
    g = _nonneg(gamma, "gamma")

    def from_density(B_, h):
        if h is not None and B is None:
            return (1.0 + h) ** 3 / (2.0 * h) + 2.0 * g
        return 2.0 * (B_ + g)

    return LossSpec(
        name="hinge",
        psi=lambda x, y: np.maximum(1.0 - y * x, 0.0) + g * x * x,
        xi=lambda x, y: -y * (y * x < 1.0) + 2.0 * g * x,
        alpha=2.0 * g,
        lipschitz_L=None if B is None else 2.0 * (float(B) + g),
        gamma=g,
        smooth=False,
        zeta=lambda p: 1.0 + 2.0 * g * p,
        phi_bar=1.0,
        xi0_bound=1.0,
        task="classification",
        params={"gamma": g, "B": B},
        smoothed_psi=_hinge_smoothed_psi(g),
        smoothed_xi=_hinge_smoothed_xi(g),
        needs_density=True,
        lipschitz_from_density=from_density,
    )


def SigmoidPenalized(beta=1.0, gamma=0.0):
    """``1 - tanh(beta y x) + gamma x^2``; strongly convex when ``beta < sqrt(gamma)``.

    The cataloged modulus ``2 (gamma - beta^2)`` is nonpositive otherwise and
    the strong convexity check then fails.
    """
    g = _nonneg(gamma, "gamma")
    beta = float(beta)
    if not beta > 0:
        raise ConfigError("sigmoid beta must be positive")

    def xi(x, y):
        t = np.tanh(beta * y * x)
        return -beta * y * (1.0 - t * t) + 2.0 * g * x

    return LossSpec(
        name="sigmoid",
        psi=lambda x, y: 1.0 - np.tanh(beta * y * x) + g * x * x,
        xi=xi,
        alpha=2.0 * (g - beta * beta),
        lipschitz_L=2.0 * beta * beta * _SECH2_TANH_MAX + 2.0 * g,
        gamma=g,
        smooth=True,
        zeta=lambda p: beta + 2.0 * g * p,
        phi_bar=1.0,
        xi0_bound=beta,
        task="classification",
        params={"beta": beta, "gamma": g},
    )


def _pexp_phi(u):
    return np.where(u <= 0, 1.0 - u, np.exp(-np.maximum(u, 0.0)))


def _pexp_dphi(u):
    return np.where(u <= 0, -1.0, -np.exp(-np.maximum(u, 0.0)))


def PiecewiseExpPenalized(gamma=0.0):
    """``phi(y x) + gamma x^2`` with ``phi(u) = 1 - u`` for ``u <= 0`` and ``exp(-u)`` beyond."""
    g = _nonneg(gamma, "gamma")
    return LossSpec(
        name="piecewise_exp",
        psi=lambda x, y: _pexp_phi(y * x) + g * x * x,
        xi=lambda x, y: y * _pexp_dphi(y * x) + 2.0 * g * x,
        alpha=2.0 * g,
        lipschitz_L=1.0 + 2.0 * g,
        gamma=g,
        smooth=True,
        zeta=lambda p: 1.0 + 2.0 * g * p,
        phi_bar=1.0,
        xi0_bound=1.0,
        task="classification",
        params={"gamma": g},
    )


CATALOG = {
    "squared": Squared,
    "absolute": AbsolutePenalized,
    "logit": LogitPenalized,
    "exponential": ExponentialPenalized,
    "hinge": HingePenalized,
    "sigmoid": SigmoidPenalized,
    "piecewise_exp": PiecewiseExpPenalized,
}
_ALIASES = {"exp": "exponential", "abs": "absolute", "pexp": "piecewise_exp", "ls": "squared"}


def _nonneg(v, what):
    v = float(v)
    if not v >= 0:
        raise ConfigError(f"{what} must be >= 0, got {v}")
    return v


def parse_loss(text: str, **overrides) -> LossSpec:
    """Build a loss from ``name[:param=value,...]``, e.g. ``logit:gamma=0.1``."""
    name, _, rest = text.strip().partition(":")
    name = _ALIASES.get(name.strip().lower(), name.strip().lower())
    if name not in CATALOG:
        raise ConfigError(f"unknown loss {name!r}; choose from {sorted(CATALOG)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"malformed loss parameter {item!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"loss parameter {key!r} is not a number: {val!r}") from None
    params.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return CATALOG[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for loss {name!r}: {exc}") from None


# ------------------------------------------------------------------ operations


def resolve_lipschitz(loss: LossSpec, m: Measure) -> float:
    """Lipschitz constant valid for ``loss`` under the measure ``m``."""
    if loss.task == "classification":
        if loss.name != "hinge" and m.halfwidth is not None:
            raise AssumptionError(f"{loss.name} loss constants assume unsmoothed labels")
        if m.halfwidth is None and not np.all(np.abs(m.y) == 1.0):
            raise AssumptionError(f"{loss.name} loss needs labels in {{-1, +1}}")
    if not loss.needs_density:
        return loss.lipschitz_L
    B = loss.params.get("B")
    if B is None and m.density_bound is None:
        raise AssumptionError(
            f"{loss.name} loss is not differentiable: its Lipschitz constant requires a density "
            "bound (pass B=... or use a Y-smoothed measure)"
        )
    B = float(B) if B is not None else m.density_bound
    return float(loss.lipschitz_from_density(B, m.halfwidth))


def _guarded(fn, x, y):
    with np.errstate(over="ignore", invalid="ignore"):
        return fn(x, y)


def loss_values(loss: LossSpec, m: Measure, F) -> np.ndarray:
    """Per-sample ``E[psi(F(X_i), Y) | X_i]`` under the measure's Y-kernel."""
    v = values_at(F, m)
    if m.halfwidth is not None and loss.smoothed_psi is not None:
        out = loss.smoothed_psi(v, m.y, m.halfwidth)
    else:
        out = kernel_mean(m, lambda X, yy: _guarded(loss.psi, v, yy))
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NumericalError(f"{loss.name} loss overflowed", int(bad[0]))
    return out


def risk(loss: LossSpec, m: Measure, F) -> float:
    """``C(F) = E psi(F(X), Y)`` under ``m``."""
    return float(np.dot(m.weights, loss_values(loss, m, F)))


def subgrad_values(loss: LossSpec, m: Measure, F) -> np.ndarray:
    """Per-sample subgradients ``E[xi(F(X_i), Y) | X_i]`` in sample order."""
    v = values_at(F, m)
    if m.halfwidth is not None and loss.smoothed_xi is not None:
        out = loss.smoothed_xi(v, m.y, m.halfwidth)
    else:
        out = kernel_mean(m, lambda X, yy: _guarded(loss.xi, v, yy))
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NumericalError(f"{loss.name} subgradient is not finite", int(bad[0]))
    return out


def kappa(loss: LossSpec, m: Measure) -> float:
    """``(E xi(0, Y)^2)^(1/2)``, the constant in the iterate norm bound."""
    g0 = subgrad_values(loss, m, 0.0)
    return math.sqrt(float(np.dot(m.weights, g0 * g0)))


def norm_bound(loss: LossSpec, kappa_: float, risk_value: float) -> float:
    """Upper bound on ``||F||`` for any ``F`` of risk ``risk_value`` (needs alpha > 0)."""
    a = loss.alpha
    return 2.0 * kappa_ / a + math.sqrt(2.0 * max(risk_value, 0.0) / a)


# ---------------------------------------------------------- assumption checks


@dataclass(frozen=True)
class Grid:
    """Sampling plan for :func:`check_assumptions`.

    ``x`` values form an even grid on ``[x_min, x_max]``; every ordered pair
    of grid points is tested.  ``y_values`` defaults to the labels for
    classification losses and to quantiles of the measure's responses
    otherwise.
    """

    x_min: float = -3.0
    x_max: float = 3.0
    n_x: int = 41
    y_values: tuple | None = None
    fd_step: float = 1e-6
    tol: float = 1e-9

    def xs(self):
        return np.linspace(self.x_min, self.x_max, self.n_x)


def _entry(name, margins, note="", passed=None):
    worst = float(np.min(margins)) if np.size(margins) else 0.0
    if passed is None:
        passed = bool(worst >= 0.0)
    return {"name": name, "pass": bool(passed), "worst_margin": worst, "note": note}


def _grid_y(loss, m, grid):
    if grid.y_values is not None:
        return np.asarray(grid.y_values, dtype=float)
    if loss.task == "classification":
        return np.array([-1.0, 1.0])
    if m is None:
        return np.linspace(-2.0, 2.0, 9)
    return np.unique(np.quantile(m.y, np.linspace(0, 1, 11)))


def check_assumptions(loss: LossSpec, m: Measure | None = None, grid: Grid | None = None) -> dict:
    """Sampled verification of convexity, A1, A2, A3/A'3 and A4 for ``loss``.

    Failures are report entries, never exceptions.  Margins are
    ``rhs - lhs`` of each inequality after a ``tol * (1 + |value|)`` slack,
    so a nonnegative worst margin means the sampled inequality holds.
    """
    grid = grid or Grid()
    xs = grid.xs()
    if loss.cap is not None:
        xs = xs[np.abs(xs) <= loss.cap]
    ys = _grid_y(loss, m, grid)
    x1, x2, yy = (a.ravel() for a in np.meshgrid(xs, xs, ys, indexing="ij"))
    tol = grid.tol
    p1, p2 = loss.psi(x1, yy), loss.psi(x2, yy)
    s1, s2 = loss.xi(x1, yy), loss.xi(x2, yy)
    slack = tol * (1.0 + np.abs(p1) + np.abs(p2))
    entries = []

    if m is not None:
        c0 = risk(loss, m, 0.0)
        entries.append(_entry("A1", [0.0], f"E psi(0,Y) = {c0!r}", passed=math.isfinite(c0)))

    mid = loss.psi(0.5 * (x1 + x2), yy)
    entries.append(_entry("convexity", 0.5 * (p1 + p2) - mid + slack))
    entries.append(_entry("subgradient_inequality", p1 - p2 - s2 * (x1 - x2) + slack))

    h = grid.fd_step
    p0 = loss.psi(xs[:, None], ys[None, :])
    fwd = (loss.psi(xs[:, None] + h, ys[None, :]) - p0) / h
    bwd = (p0 - loss.psi(xs[:, None] - h, ys[None, :])) / h
    s0 = loss.xi(xs[:, None], ys[None, :])
    fd_slack = 1e-7 * (1.0 + np.abs(p0))
    entries.append(_entry("subgradient_interval", np.minimum(fwd - s0, s0 - bwd) + fd_slack))

    dx2 = (x1 - x2) ** 2
    if loss.alpha > 0:
        eq2 = p1 - p2 - s2 * (x1 - x2) - 0.5 * loss.alpha * dx2 + slack
        entries.append(_entry("A2", eq2, f"alpha = {loss.alpha!r}"))
    else:
        entries.append(
            _entry("A2", [loss.alpha], f"cataloged alpha = {loss.alpha!r} is not positive", passed=False)
        )

    entries.append(_check_A3(loss, m, xs, ys, grid))

    p = np.maximum(np.abs(x1), np.abs(x2))
    zeta_loss = loss
    if loss.name in ("squared", "absolute") and loss.params.get("y_bound") is None:
        zeta_loss = loss.rebuild(y_bound=float(np.max(np.abs(ys))))
    zeta = np.array([zeta_loss.zeta(pp) for pp in p])
    entries.append(_entry("A4", zeta * np.abs(x1 - x2) - np.abs(p1 - p2) + slack))

    return {
        "loss": loss.describe(),
        "measure": None if m is None else m.kind,
        "checks": entries,
        "pass": all(e["pass"] for e in entries),
    }


def _check_A3(loss, m, xs, ys, grid):
    tol = grid.tol
    if loss.smooth:
        if m is not None:
            try:
                L = resolve_lipschitz(loss, m)
            except AssumptionError as exc:
                return _entry("A3", [0.0], str(exc), passed=False)
        else:
            L = loss.lipschitz_L
        x1, x2, yy = (a.ravel() for a in np.meshgrid(xs, xs, ys, indexing="ij"))
        d = np.abs(loss.xi(x1, yy) - loss.xi(x2, yy))
        return _entry("A3", L * np.abs(x1 - x2) - d + tol * (1.0 + d), f"A'3 with L = {L!r}")

    if m is None:
        return _entry("A3", [0.0], "requires density bound (no measure given)", passed=False)
    try:
        L = resolve_lipschitz(loss, m)
    except AssumptionError:
        return _entry("A3", [0.0], "requires density bound", passed=False)

    # conditional expectation of xi given X, one row per distinct X
    _, groups = np.unique(m.X, axis=0, return_inverse=True)
    groups = groups.ravel()
    ng = groups.max() + 1
    gw = np.bincount(groups, weights=m.weights, minlength=ng)
    cond = []
    for x in xs:
        v = subgrad_values(loss, m, float(x))
        cond.append(np.bincount(groups, weights=m.weights * v, minlength=ng) / np.where(gw > 0, gw, 1.0))
    cond = np.array(cond)  # (len(xs), ng)
    dx = np.abs(xs[:, None] - xs[None, :])
    diff = np.abs(cond[:, None, :] - cond[None, :, :])
    margins = L * dx[:, :, None] - diff + tol * (1.0 + diff)
    return _entry("A3", margins, f"conditional check with L = {L!r}")
