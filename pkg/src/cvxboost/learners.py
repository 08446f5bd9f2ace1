"""Weak-learner classes and the two per-iteration search problems.

Two leaf flavors are supported:

``SignLeaf``
    every leaf is +1 or -1 (or the tree is identically zero), so a nonzero
    tree has unit norm under any measure.  :func:`select_direction_F`
    maximizes the correlation ``sum_i w_i r_i f(X_i)`` with the residual
    ``r = -xi`` over such trees.
``FreeLeaf``
    leaves carry arbitrary reals.  :func:`fit_ls_tree` fits the residual by
    weighted least squares (CART growth, leaf values are weighted means).

Candidate split thresholds are either the midpoints between consecutive
distinct sample coordinates (``thresholds="data"``) or the midpoints of the
current cell of a dyadic grid on ``[0, 1]^d`` (``thresholds="grid"``).
Samples with ``x[dim] <= threshold`` go left.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Measure
from .exceptions import CapacityError, ConfigError, DimensionError, SchemaError

SIGN = "SignLeaf"
FREE = "FreeLeaf"
GRID_GUARD = 24


class Tree:
    """Axis-parallel binary tree stored as flat node arrays (node 0 is the root)."""

    def __init__(self, feature, threshold, left, right, value, flavor, grid_level=None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.flavor = flavor
        self.grid_level = grid_level

    @classmethod
    def constant(cls, value, flavor=SIGN, grid_level=None):
        return cls([-1], [0.0], [-1], [-1], [float(value)], flavor, grid_level)

    @classmethod
    def zero(cls, flavor=SIGN, grid_level=None):
        return cls.constant(0.0, flavor, grid_level)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    @property
    def is_zero(self):
        return bool(np.all(self.value[self.feature < 0] == 0.0))

    def apply(self, X):
        """Leaf node index reached by each row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return self.value[self.apply(X)]

    def negate(self):
        v = np.where(self.feature < 0, -self.value, self.value)
        v = v + 0.0  # no negative zeros in leaves
        return Tree(self.feature, self.threshold, self.left, self.right, v, self.flavor, self.grid_level)

    def to_dict(self):
        nodes = []

        def walk(i):
            if self.feature[i] < 0:
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append({"dim": int(self.feature[i]), "thr": float(self.threshold[i])})
                walk(self.left[i])
                walk(self.right[i])

        walk(0)
        out = {"flavor": self.flavor, "nodes": nodes}
        if self.grid_level is not None:
            out["grid_level"] = int(self.grid_level)
        return out

    @classmethod
    def from_dict(cls, data):
        nodes = data["nodes"]
        feature, threshold, left, right, value = [], [], [], [], []
        pos = 0

        def build():
            nonlocal pos
            if pos >= len(nodes):
                raise SchemaError("truncated tree node list", "nodes")
            spec = nodes[pos]
            pos += 1
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in spec:
                value[i] = float(spec["leaf"])
            else:
                feature[i] = int(spec["dim"])
                threshold[i] = float(spec["thr"])
                left[i] = build()
                right[i] = build()
            return i

        build()
        if pos != len(nodes):
            raise SchemaError("trailing nodes after tree", "nodes")
        return cls(feature, threshold, left, right, value, data["flavor"], data.get("grid_level"))

    def to_json(self):
        return json.dumps(self.to_dict())

    def __eq__(self, other):
        return isinstance(other, Tree) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"Tree({self.flavor}, leaves={self.n_leaves})"


@dataclass(frozen=True)
class WeakClassConfig:
    """Description of a weak-learner class.

    ``max_leaves=None`` with ``thresholds="grid"`` means the full grid of
    ``2**(d * grid_level)`` cells.
    """

    leaf: str = SIGN
    max_leaves: int | None = 2
    max_depth: int | None = None
    thresholds: str = "data"
    grid_level: int | None = None
    include_zero: bool = True

    def __post_init__(self):
        if self.leaf not in (SIGN, FREE):
            raise ConfigError(f"unknown leaf flavor {self.leaf!r}")
        if self.thresholds not in ("data", "grid"):
            raise ConfigError(f"unknown threshold policy {self.thresholds!r}")
        if self.thresholds == "grid" and (self.grid_level is None or self.grid_level < 0):
            raise ConfigError("grid classes need a nonnegative grid_level")
        if self.max_leaves is not None and self.max_leaves < 1:
            raise ConfigError("max_leaves must be >= 1")
        if self.thresholds == "data" and self.max_leaves is None and self.max_depth is None:
            raise ConfigError("data-driven trees need max_leaves or max_depth")

    def with_leaf(self, leaf):
        return WeakClassConfig(leaf, self.max_leaves, self.max_depth, self.thresholds, self.grid_level, self.include_zero)

    def describe(self):
        if self.thresholds == "grid":
            return f"grid:{self.grid_level}" if self.max_leaves is None else f"grid:{self.grid_level}:{self.max_leaves}"
        if self.max_depth is not None:
            return f"depth:{self.max_depth}"
        return "stump" if self.max_leaves == 2 else f"tree:{self.max_leaves}"


def parse_class(text, leaf=SIGN):
    """``stump`` | ``tree:k`` (k leaves) | ``depth:D`` | ``grid:k`` (midpoint grid of level k)."""
    kind, _, arg = text.strip().partition(":")
    try:
        if kind == "stump":
            return WeakClassConfig(leaf, max_leaves=2)
        if kind == "const":
            return WeakClassConfig(leaf, max_leaves=1)
        if kind == "tree":
            return WeakClassConfig(leaf, max_leaves=int(arg))
        if kind == "depth":
            D = int(arg)
            return WeakClassConfig(leaf, max_leaves=2**D, max_depth=D)
        if kind == "grid":
            level, _, k = arg.partition(":")
            return WeakClassConfig(leaf, max_leaves=int(k) if k else None, thresholds="grid", grid_level=int(level))
    except ValueError:
        raise ConfigError(f"bad weak-learner class {text!r}") from None
    raise ConfigError(f"unknown weak-learner class {text!r}; use stump, tree:k, depth:D or grid:k")


# ------------------------------------------------------------------ grid class


@dataclass(frozen=True)
class GridPartition:
    """Regular dyadic grid of ``2**(d*level)`` cells on ``[0, 1]^d``."""

    d: int
    level: int

    @property
    def per_dim(self):
        return 2**self.level

    @property
    def n_cells(self):
        return 2 ** (self.d * self.level)

    @property
    def cell_volume(self):
        return 2.0 ** (-self.d * self.level)

    def cell_index(self, X):
        """Flat cell index of each row; boundary points belong to the lower cell."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.d:
            raise DimensionError(f"expected {self.d} features, got {X.shape[1]}")
        k = self.per_dim
        coords = np.clip(np.ceil(X * k).astype(np.int64) - 1, 0, k - 1)
        return np.ravel_multi_index(tuple(coords.T), (k,) * self.d) if self.d > 1 else coords[:, 0]

    def cell_bounds(self, j):
        coords = np.unravel_index(j, (self.per_dim,) * self.d)
        lo = np.array(coords, dtype=float) / self.per_dim
        return lo, lo + 1.0 / self.per_dim

    def measures(self, m: Measure):
        """Mass ``P_n(A_j)`` of every cell under ``m``."""
        return np.bincount(self.cell_index(m.X), weights=m.weights, minlength=self.n_cells)


def enumerate_grid_class(d, k_n):
    """Partition generated by midpoint-cut trees of level ``k_n`` in dimension ``d``."""
    if d < 1 or k_n < 0:
        raise ConfigError("need d >= 1 and k_n >= 0")
    if d * k_n > GRID_GUARD:
        raise CapacityError(f"grid of 2**{d * k_n} cells exceeds the 2**{GRID_GUARD} guard")
    return GridPartition(d, k_n)


def _full_grid_tree(grid: GridPartition, cell_values, flavor):
    """Complete midpoint tree whose leaves are the grid cells (dims cut round-robin)."""
    feature, threshold, left, right, value = [], [], [], [], []
    d, k = grid.d, grid.per_dim
    depth = d * grid.level

    def build(lo, hi, level):
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        if level == depth:
            coords = tuple(int(round(v * k)) for v in lo)
            value[i] = float(cell_values[np.ravel_multi_index(coords, (k,) * d)])
            return i
        dim = level % d
        thr = 0.5 * (lo[dim] + hi[dim])
        feature[i] = dim
        threshold[i] = thr
        hl, lr = list(hi), list(lo)
        hl[dim] = thr
        lr[dim] = thr
        left[i] = build(lo, hl, level + 1)
        right[i] = build(lr, hi, level + 1)
        return i

    build([0.0] * d, [1.0] * d, 0)
    return Tree(feature, threshold, left, right, value, flavor, grid.level)


# -------------------------------------------------------------- tree growing


@dataclass
class Direction:
    """A searched weak learner with its values at the samples."""

    tree: Tree
    values: np.ndarray
    objective: float
    search: str


class _Node:
    __slots__ = ("idx", "depth", "lo", "hi", "levels", "S", "W", "parent", "split", "gain")

    def __init__(self, idx, depth, lo, hi, levels, S, W, parent):
        self.idx, self.depth, self.lo, self.hi, self.levels = idx, depth, lo, hi, levels
        self.S, self.W, self.parent = S, W, parent
        self.split = None
        self.gain = 0.0


def _gain(kind, SL, WL, SR, WR, S, W):
    if kind == SIGN:
        return np.abs(SL) + np.abs(SR) - abs(S)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = SL * SL / WL + SR * SR / WR - (S * S / W if W > 0 else 0.0)
    return np.where((WL > 0) & (WR > 0), g, -np.inf)


def _best_split_data(m, wr, node, kind):
    best = None
    mask = np.zeros(m.n, dtype=bool)
    mask[node.idx] = True
    for dim in range(m.d):
        order = m.sorted_order(dim)
        order = order[mask[order]]
        xs = m.X[order, dim]
        change = np.flatnonzero(xs[1:] > xs[:-1])
        if change.size == 0:
            continue
        SL = np.cumsum(wr[order])[change]
        WL = np.cumsum(m.weights[order])[change]
        g = _gain(kind, SL, WL, node.S - SL, node.W - WL, node.S, node.W)
        j = int(np.argmax(g))
        if best is None or g[j] > best[0]:
            a, b = xs[change[j]], xs[change[j] + 1]
            thr = a + 0.5 * (b - a)
            if not thr < b:
                thr = a
            best = (float(g[j]), dim, float(thr))
    return best


def _best_split_grid(m, wr, node, kind, level):
    best = None
    for dim in range(m.d):
        if node.levels[dim] >= level:
            continue
        thr = 0.5 * (node.lo[dim] + node.hi[dim])
        go_left = m.X[node.idx, dim] <= thr
        if go_left.all() or not go_left.any():
            continue
        li = node.idx[go_left]
        SL = float(np.sum(wr[li]))
        WL = float(np.sum(m.weights[li]))
        g = float(_gain(kind, np.array([SL]), np.array([WL]), np.array([node.S - SL]), np.array([node.W - WL]), node.S, node.W)[0])
        if best is None or g > best[0]:
            best = (g, dim, thr)
    return best


def _grow(cfg: WeakClassConfig, m: Measure, residual):
    """Best-first growth; each step splits the leaf with the largest positive gain."""
    r = np.asarray(residual, dtype=float)
    if r.shape != (m.n,):
        raise DimensionError(f"residual has shape {r.shape}, expected ({m.n},)")
    kind = cfg.leaf
    wr = m.weights * r
    grid = cfg.thresholds == "grid"
    max_leaves = cfg.max_leaves if cfg.max_leaves is not None else 2 ** (m.d * cfg.grid_level)

    root = _Node(np.arange(m.n), 0, np.zeros(m.d), np.ones(m.d), np.zeros(m.d, dtype=int),
                 float(np.sum(wr)), float(np.sum(m.weights)), -1)
    nodes = [root]
    leaves = [0]

    def propose(i):
        nd = nodes[i]
        if cfg.max_depth is not None and nd.depth >= cfg.max_depth:
            return
        if nd.idx.size < 2 and not grid:
            return
        found = _best_split_grid(m, wr, nd, kind, cfg.grid_level) if grid else _best_split_data(m, wr, nd, kind)
        if found is not None and found[0] > 0:
            nd.gain, nd.split = found[0], (found[1], found[2])

    propose(0)
    while len(leaves) < max_leaves:
        cand = [i for i in leaves if nodes[i].split is not None]
        if not cand:
            break
        i = max(cand, key=lambda j: (nodes[j].gain, -j))
        nd = nodes[i]
        dim, thr = nd.split
        go_left = m.X[nd.idx, dim] <= thr
        for side, sel in ((0, go_left), (1, ~go_left)):
            idx = nd.idx[sel]
            lo, hi, lv = nd.lo.copy(), nd.hi.copy(), nd.levels.copy()
            if side == 0:
                hi[dim] = thr
            else:
                lo[dim] = thr
            lv[dim] += 1
            nodes.append(_Node(idx, nd.depth + 1, lo, hi, lv, float(np.sum(wr[idx])),
                               float(np.sum(m.weights[idx])), i))
        leaves.remove(i)
        leaves.extend([len(nodes) - 2, len(nodes) - 1])
        propose(len(nodes) - 2)
        propose(len(nodes) - 1)

    # node arrays in creation order; children always follow their parent
    n_nodes = len(nodes)
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    value = np.zeros(n_nodes)
    for j, nd in enumerate(nodes[1:], start=1):
        p = nd.parent
        if left[p] < 0:
            left[p] = j
            feature[p], threshold[p] = nodes[p].split
        else:
            right[p] = j
    for j in leaves:
        value[j] = _leaf_value(kind, nodes, j)
    tree = Tree(feature, threshold, left, right, value, kind, cfg.grid_level if grid else None)
    return tree, nodes, leaves


def _leaf_value(kind, nodes, j):
    nd = nodes[j]
    if kind == FREE:
        return nd.S / nd.W if nd.W > 0 else 0.0
    while j >= 0:
        S = nodes[j].S
        if S != 0.0:
            return 1.0 if S > 0 else -1.0
        j = nodes[j].parent
    return 1.0


def _leaf_values_at_samples(tree, nodes, leaves, n):
    vals = np.zeros(n)
    for j in leaves:
        vals[nodes[j].idx] = tree.value[j]
    return vals


def _full_grid(cfg, m, residual):
    grid = enumerate_grid_class(m.d, cfg.grid_level)
    cells = m.cached(("grid", cfg.grid_level), lambda: grid.cell_index(m.X))
    wr = m.weights * np.asarray(residual, dtype=float)
    S = np.bincount(cells, weights=wr, minlength=grid.n_cells)
    if cfg.leaf == FREE:
        W = np.bincount(cells, weights=m.weights, minlength=grid.n_cells)
        cell_values = np.divide(S, W, out=np.zeros_like(S), where=W > 0)
    else:
        cell_values = _grid_signs(grid, S)
    tree = m.cached(("grid-tree", cfg.grid_level), lambda: _full_grid_tree(grid, np.arange(grid.n_cells), cfg.leaf))
    leaf_cells = tree.value.astype(np.int64)
    value = np.where(tree.feature < 0, cell_values[leaf_cells], 0.0)
    out = Tree(tree.feature, tree.threshold, tree.left, tree.right, value, cfg.leaf, grid.level)
    return out, cell_values[cells]


def _grid_signs(grid, S):
    """Sign of each cell sum, falling back to the enclosing blocks of the complete tree."""
    signs = np.sign(S)
    pending = signs == 0
    if not pending.any():
        return signs
    d, level = grid.d, grid.level
    coords = np.stack(np.unravel_index(np.arange(grid.n_cells), (grid.per_dim,) * d), axis=1)
    for depth in range(d * level - 1, -1, -1):
        # cuts made along each dim by the first `depth` levels of the round-robin tree
        cuts = np.array([len(range(j, depth, d)) for j in range(d)])
        block = coords >> (level - cuts)
        bid = np.ravel_multi_index(tuple(block.T), tuple(2**cuts)) if d > 1 else block[:, 0]
        bsign = np.sign(np.bincount(bid, weights=S))[bid]
        take = pending & (bsign != 0)
        signs[take] = bsign[take]
        pending &= ~take
        if not pending.any():
            return signs
    signs[pending] = 1.0
    return signs


def _is_full_grid(cfg, d):
    return cfg.thresholds == "grid" and (cfg.max_leaves is None or cfg.max_leaves >= 2 ** (d * cfg.grid_level))


def select_direction_F(cfg: WeakClassConfig, m: Measure, residual) -> Direction:
    """Sign-leaf tree maximizing ``sum_i w_i r_i f(X_i)``; the zero tree if that maximum is 0.

    Exact for stumps (every candidate threshold is scanned) and for the full
    midpoint grid (the per-cell sign pattern is optimal); greedy otherwise.
    """
    if cfg.leaf != SIGN:
        cfg = cfg.with_leaf(SIGN)
    r = np.asarray(residual, dtype=float)
    wr = m.weights * r
    grid_level = cfg.grid_level if cfg.thresholds == "grid" else None
    if _is_full_grid(cfg, m.d):
        tree, vals = _full_grid(cfg, m, r)
        search = "exact"
    else:
        tree, nodes, leaves = _grow(cfg, m, r)
        vals = _leaf_values_at_samples(tree, nodes, leaves, m.n)
        search = "exact" if (cfg.max_leaves or 0) <= 2 else "greedy"
    objective = float(np.dot(wr, vals))
    if not objective > 0.0:
        return Direction(Tree.zero(SIGN, grid_level), np.zeros(m.n), 0.0, search)
    return Direction(tree, vals, objective, search)


def fit_ls_tree(cfg: WeakClassConfig, m: Measure, residual) -> Direction:
    """Free-leaf CART fit of ``residual``; objective is ``2 E xi f + ||f||^2`` (never positive)."""
    if cfg.leaf != FREE:
        cfg = cfg.with_leaf(FREE)
    r = np.asarray(residual, dtype=float)
    grid_level = cfg.grid_level if cfg.thresholds == "grid" else None
    if _is_full_grid(cfg, m.d):
        tree, vals = _full_grid(cfg, m, r)
        search = "exact"
    else:
        tree, nodes, leaves = _grow(cfg, m, r)
        vals = _leaf_values_at_samples(tree, nodes, leaves, m.n)
        search = "greedy"
    objective = float(-2.0 * np.dot(m.weights * r, vals) + np.dot(m.weights, vals * vals))
    if not np.any(vals != 0.0):
        return Direction(Tree.zero(FREE, grid_level), np.zeros(m.n), 0.0, search)
    return Direction(tree, vals, objective, search)
