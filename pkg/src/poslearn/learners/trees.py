"""Depth-limited regression trees, gradient boosting, and random-forest
importance screening.

Trees split on weighted variance reduction evaluated at midpoints between
distinct feature values, iterating features in ascending index so ties are
deterministic. Leaf values are ratio aggregates sum(num)/sum(den), which
covers weighted-mean leaves (den = w) and Newton leaves for log-loss boosting
(den = w*p*(1-p)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import sigmoid

MIN_GAIN = 1e-12


@dataclass
class Tree:
    """Flat array representation; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            goes_left = X[rows, f] <= self.threshold[node]
            stack.append((self.left[node], rows[goes_left]))
            stack.append((self.right[node], rows[~goes_left]))
        return out


def _best_split(
    X: np.ndarray,
    target: np.ndarray,
    w: np.ndarray,
    rows: np.ndarray,
    feature_ids: np.ndarray,
    min_leaf: int,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) over candidate features, or None."""
    tw = w[rows]
    ty = target[rows]
    total_w = tw.sum()
    total_wy = tw @ ty
    total_wy2 = tw @ ty**2
    parent_sse = total_wy2 - total_wy**2 / total_w if total_w > 0 else 0.0
    if parent_sse <= MIN_GAIN:
        return None

    best: tuple[int, float, float] | None = None
    n = len(rows)
    for f in feature_ids:
        xv = X[rows, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        ws = tw[order]
        ys = ty[order]
        # candidate cuts only between distinct consecutive values
        distinct = np.nonzero(xs[1:] > xs[:-1])[0]
        if len(distinct) == 0:
            continue
        cum_w = np.cumsum(ws)
        cum_wy = np.cumsum(ws * ys)
        cum_wy2 = np.cumsum(ws * ys**2)
        counts = distinct + 1
        valid = (counts >= min_leaf) & (n - counts >= min_leaf)
        if not np.any(valid):
            continue
        cuts = distinct[valid]
        lw = cum_w[cuts]
        lwy = cum_wy[cuts]
        lwy2 = cum_wy2[cuts]
        rw = total_w - lw
        rwy = total_wy - lwy
        rwy2 = total_wy2 - lwy2
        with np.errstate(divide="ignore", invalid="ignore"):
            sse_l = lwy2 - np.where(lw > 0, lwy**2 / lw, 0.0)
            sse_r = rwy2 - np.where(rw > 0, rwy**2 / rw, 0.0)
        gains = parent_sse - (sse_l + sse_r)
        k = int(np.argmax(gains))
        gain = float(gains[k])
        if gain > MIN_GAIN and (best is None or gain > best[2]):
            cut = cuts[k]
            thr = 0.5 * (xs[cut] + xs[cut + 1])
            best = (int(f), float(thr), gain)
    return best


def grow_tree(
    X: np.ndarray,
    target: np.ndarray,
    w: np.ndarray,
    num: np.ndarray,
    den: np.ndarray,
    max_depth: int | None,
    min_leaf: int,
    rng: np.random.Generator | None = None,
    max_features: int | None = None,
    importances: np.ndarray | None = None,
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def leaf_value(rows: np.ndarray) -> float:
        d = den[rows].sum()
        return float(num[rows].sum() / d) if d > 0 else 0.0

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    p = X.shape[1]
    root = new_node()
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        depth_ok = max_depth is None or depth < max_depth
        split = None
        if depth_ok and len(rows) >= 2 * min_leaf:
            if max_features is not None and max_features < p:
                ids = np.sort(rng.choice(p, size=max_features, replace=False))
            else:
                ids = np.arange(p)
            split = _best_split(X, target, w, rows, ids, min_leaf)
        if split is None:
            value[node] = leaf_value(rows)
            continue
        f, thr, gain = split
        if importances is not None:
            importances[f] += gain
        feature[node] = f
        threshold[node] = thr
        goes_left = X[rows, f] <= thr
        l_node, r_node = new_node(), new_node()
        left[node], right[node] = l_node, r_node
        stack.append((l_node, rows[goes_left], depth + 1))
        stack.append((r_node, rows[~goes_left], depth + 1))

    return Tree(
        feature=np.asarray(feature),
        threshold=np.asarray(threshold),
        left=np.asarray(left),
        right=np.asarray(right),
        value=np.asarray(value),
    )


@dataclass
class BoostedTrees:
    base_score: float
    shrinkage: float
    trees: list[Tree]
    binary: bool

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.shrinkage * tree.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        raw = self.raw_predict(X)
        return sigmoid(raw) if self.binary else raw


def fit_gbt(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    n_rounds: int,
    max_depth: int,
    shrinkage: float,
    min_leaf: int,
    binary: bool = False,
    loss_history: list | None = None,
) -> BoostedTrees:
    """Gradient boosting on squared loss (continuous) or log loss (binary).

    Zero rounds leave the weighted-mean constant (continuous) or the
    prevalence on the log-odds scale (binary).
    """
    if n_rounds < 0:
        raise ValueError(f"n_rounds must be >= 0, got {n_rounds}")
    if binary:
        prevalence = float(np.clip(w @ y, 1e-6, 1.0 - 1e-6))
        base = float(np.log(prevalence / (1.0 - prevalence)))
    else:
        base = float(w @ y)

    model = BoostedTrees(base_score=base, shrinkage=shrinkage, trees=[], binary=binary)
    raw = np.full(len(y), base)
    for _ in range(n_rounds):
        if binary:
            p = sigmoid(raw)
            resid = y - p
            den = w * np.clip(p * (1.0 - p), 1e-10, None)
        else:
            resid = y - raw
            den = w
        tree = grow_tree(
            X, resid, w, num=w * resid, den=den,
            max_depth=max_depth, min_leaf=min_leaf,
        )
        raw += shrinkage * tree.predict(X)
        model.trees.append(tree)
        if loss_history is not None:
            if binary:
                p = np.clip(sigmoid(raw), 1e-12, 1.0 - 1e-12)
                loss_history.append(float(-w @ (y * np.log(p) + (1 - y) * np.log(1 - p))))
            else:
                loss_history.append(float(w @ (y - raw) ** 2))
    return model


@dataclass(frozen=True)
class ScreeningReport:
    """Random-forest variable importances and the indices of the top-k."""

    importances: np.ndarray
    selected: tuple[int, ...]


def rf_importance_screen(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    n_trees: int = 200,
    seed: int = 0,
    max_depth: int | None = None,
    min_leaf: int = 5,
) -> ScreeningReport:
    """Impurity-based importance from bootstrap regression trees with random
    feature subsampling; returns the k most important feature indices, ties
    broken by the lowest index. Deterministic given the seed.

    Impurity importance is known to favour high-cardinality predictors; treat
    the ranking as a screen, not an effect measure.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if not 1 <= k <= p:
        raise ValueError(f"k={k} out of range 1..{p}")
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    rng = np.random.default_rng(seed)
    importances = np.zeros(p)
    max_features = max(1, int(np.ceil(p / 3)))
    unit = np.ones(n)
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        grow_tree(
            X[rows], y[rows], unit, num=y[rows], den=unit,
            max_depth=max_depth, min_leaf=min_leaf,
            rng=rng, max_features=max_features, importances=importances,
        )
    order = np.lexsort((np.arange(p), -importances))
    return ScreeningReport(importances=importances, selected=tuple(int(i) for i in order[:k]))


def permutation_importance(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 200,
    seed: int = 0,
    max_depth: int | None = None,
    min_leaf: int = 5,
) -> np.ndarray:
    """Out-of-bag permutation importance; slower, less biased alternative."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    rng = np.random.default_rng(seed)
    importances = np.zeros(p)
    max_features = max(1, int(np.ceil(p / 3)))
    unit = np.ones(n)
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), rows)
        tree = grow_tree(
            X[rows], y[rows], unit, num=y[rows], den=unit,
            max_depth=max_depth, min_leaf=min_leaf,
            rng=rng, max_features=max_features,
        )
        if len(oob) == 0:
            continue
        base_err = float(np.mean((y[oob] - tree.predict(X[oob])) ** 2))
        for j in range(p):
            shuffled = X[oob].copy()
            shuffled[:, j] = shuffled[rng.permutation(len(oob)), j]
            importances[j] += float(np.mean((y[oob] - tree.predict(shuffled)) ** 2)) - base_err
    return np.maximum(importances, 0.0)
