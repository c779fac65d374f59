"""Adaptive hinge-basis regression (additive, degree 1).

Forward stage: greedily add mirrored hinge pairs max(0, x-c) / max(0, c-x)
with knots at observed values, refitting by weighted least squares. Backward
stage: delete basis functions one at a time, keeping the subset with the best
generalized cross-validation score. Pruning everything leaves the intercept,
i.e. the weighted-mean predictor.
"""
from __future__ import annotations

import numpy as np

MAX_KNOTS_PER_FEATURE = 25


def candidate_knots(x: np.ndarray, min_segment: int) -> np.ndarray:
    """Knot locations: observed values thinned so consecutive knots are at
    least ``min_segment`` observations apart, capped per feature."""
    xs = np.sort(x)
    n = len(xs)
    step = max(min_segment, 1)
    idx = np.arange(step, n - step + 1, step)
    if len(idx) == 0:
        return np.empty(0)
    knots = np.unique(xs[idx])
    if len(knots) > MAX_KNOTS_PER_FEATURE:
        keep = np.linspace(0, len(knots) - 1, MAX_KNOTS_PER_FEATURE).round().astype(int)
        knots = knots[keep]
    return knots


def hinge(x: np.ndarray, knot: float, direction: int) -> np.ndarray:
    if direction > 0:
        return np.maximum(0.0, x - knot)
    return np.maximum(0.0, knot - x)


def _wls_sse(B: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    sw = np.sqrt(w)
    coef, _, _, _ = np.linalg.lstsq(B * sw[:, None], y * sw, rcond=None)
    r = y - B @ coef
    return coef, float(w @ r**2)


def gcv_score(sse: float, n_terms: int, n: int, penalty: float) -> float:
    cost = n_terms + penalty * (n_terms - 1) / 2.0
    if cost >= n:
        return np.inf
    return (sse / n) / (1.0 - cost / n) ** 2


def fit_hinge_spline(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    max_basis: int = 10,
    min_segment: int = 3,
    gcv_penalty: float = 3.0,
) -> tuple[list[tuple[int, float, int]], np.ndarray, bool]:
    """Returns (terms, coefficients, converged) where ``terms`` lists
    (feature, knot, direction) for each hinge after pruning and the
    coefficient vector is [intercept, term coefficients...]."""
    n, p = X.shape
    terms: list[tuple[int, float, int]] = []
    B = np.ones((n, 1))
    _, sse = _wls_sse(B, y, w)

    knots = [candidate_knots(X[:, j], min_segment) for j in range(p)]
    for _ in range(max_basis):
        best = None
        for j in range(p):
            col = X[:, j]
            for c in knots[j]:
                pair = np.column_stack([hinge(col, c, +1), hinge(col, c, -1)])
                _, cand_sse = _wls_sse(np.column_stack([B, pair]), y, w)
                if cand_sse < sse - 1e-12 and (best is None or cand_sse < best[0]):
                    best = (cand_sse, j, float(c))
        if best is None:
            break
        sse, j, c = best
        B = np.column_stack([B, hinge(X[:, j], c, +1), hinge(X[:, j], c, -1)])
        terms += [(j, c, +1), (j, c, -1)]

    terms, coef = _prune_by_gcv(X, y, w, terms, gcv_penalty)
    return terms, coef, bool(np.all(np.isfinite(coef)))


def _prune_by_gcv(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    terms: list[tuple[int, float, int]],
    penalty: float,
) -> tuple[list[tuple[int, float, int]], np.ndarray]:
    n = len(y)

    def basis(subset: list[tuple[int, float, int]]) -> np.ndarray:
        cols = [np.ones(n)]
        cols += [hinge(X[:, j], c, d) for j, c, d in subset]
        return np.column_stack(cols)

    current = list(terms)
    coef, sse = _wls_sse(basis(current), y, w)
    best_terms, best_coef = current, coef
    best_gcv = gcv_score(sse, 1 + len(current), n, penalty)

    while current:
        trial_best = None
        for k in range(len(current)):
            subset = current[:k] + current[k + 1 :]
            c_coef, c_sse = _wls_sse(basis(subset), y, w)
            score = gcv_score(c_sse, 1 + len(subset), n, penalty)
            if trial_best is None or score < trial_best[0]:
                trial_best = (score, subset, c_coef)
        score, current, coef = trial_best
        if score <= best_gcv:
            best_gcv, best_terms, best_coef = score, current, coef
    return best_terms, best_coef


def spline_predict(
    terms: list[tuple[int, float, int]], coef: np.ndarray, X: np.ndarray
) -> np.ndarray:
    out = np.full(len(X), coef[0])
    for k, (j, c, d) in enumerate(terms):
        out += coef[k + 1] * hinge(X[:, j], c, d)
    return out
