"""Linear-family kernels: weighted mean, least squares, ridge, lasso, and
their logistic counterparts for binary outcomes.

All fitters take a raw design matrix (no intercept column) plus non-negative
weights, and return a coefficient vector laid out as [intercept, slopes...].
Penalties never touch the intercept. Binary fitters carry a small L2 floor so
separable data still yields finite estimates.
"""
from __future__ import annotations

import numpy as np

LASSO_MAX_SWEEPS = 10_000
LASSO_TOL = 1e-9
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
LOGISTIC_L2_FLOOR = 1e-4


def soft_threshold(z: float, gamma: float) -> float:
    """S(z, gamma) = sign(z) * max(|z| - gamma, 0)."""
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def normalized_weights(n: int, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights shape {w.shape} does not match {n} rows")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    return w / total


def weighted_mean(y: np.ndarray, w: np.ndarray) -> float:
    return float(w @ y)


def fit_wls(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, bool]:
    """Weighted least squares on main terms; minimum-norm under rank deficiency."""
    X1 = np.column_stack([np.ones(len(y)), X])
    sw = np.sqrt(w)
    coef, _, _, _ = np.linalg.lstsq(X1 * sw[:, None], y * sw, rcond=None)
    return coef, bool(np.all(np.isfinite(coef)))


def fit_ridge(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float
) -> tuple[np.ndarray, bool]:
    """Closed-form penalized least squares with an unpenalized intercept."""
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    if lam == 0.0:
        return fit_wls(X, y, w)
    n, p = X.shape
    X1 = np.column_stack([np.ones(n), X])
    gram = (X1 * w[:, None]).T @ X1
    gram[1:, 1:] += lam * np.eye(p)
    rhs = (X1 * w[:, None]).T @ y
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        coef, _, _, _ = np.linalg.lstsq(gram, rhs, rcond=None)
    return coef, bool(np.all(np.isfinite(coef)))


def lasso_objective(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, coef: np.ndarray, lam: float
) -> float:
    r = y - coef[0] - X @ coef[1:]
    return float(0.5 * w @ r**2 + lam * np.abs(coef[1:]).sum())


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    lam: float,
    tol: float = LASSO_TOL,
    max_sweeps: int = LASSO_MAX_SWEEPS,
    history: list | None = None,
) -> tuple[np.ndarray, bool]:
    """Cyclic coordinate descent with soft thresholding.

    Minimizes 0.5*sum_i w_i (y_i - b0 - x_i.beta)^2 + lam*||beta||_1 with the
    weights normalized to sum 1, so with unit weights the all-zero solution
    appears exactly at lam >= max_j |sum_i x_ij (y_i - ybar)| / n.
    """
    if lam < 0:
        raise ValueError(f"lasso penalty must be >= 0, got {lam}")
    n, p = X.shape
    denom = w @ X**2
    beta = np.zeros(p)
    b0 = float(w @ y)
    r = y - b0  # residual excluding nothing: y - b0 - X@beta with beta = 0
    converged = False
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            if denom[j] <= 0:
                continue
            old = beta[j]
            z = w @ (X[:, j] * r) + denom[j] * old
            new = soft_threshold(z, lam) / denom[j]
            if new != old:
                r += X[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        new_b0 = b0 + float(w @ r)
        if new_b0 != b0:
            delta = max(delta, abs(new_b0 - b0))
            r += b0 - new_b0
            b0 = new_b0
        if history is not None:
            history.append(lasso_objective(X, y, w, np.concatenate([[b0], beta]), lam))
        if delta < tol:
            converged = True
            break
    coef = np.concatenate([[b0], beta])
    return coef, converged and bool(np.all(np.isfinite(coef)))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic_ridge(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    lam: float,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_TOL,
) -> tuple[np.ndarray, bool]:
    """L2-penalized logistic regression by iteratively reweighted least squares."""
    lam = max(lam, LOGISTIC_L2_FLOOR)
    n, p = X.shape
    X1 = np.column_stack([np.ones(n), X])
    coef = np.zeros(p + 1)
    for _ in range(max_iter):
        eta = X1 @ coef
        mu = sigmoid(eta)
        s = np.clip(mu * (1.0 - mu), 1e-10, None)
        wirls = w * s
        z = eta + (y - mu) / s
        gram = (X1 * wirls[:, None]).T @ X1
        gram[1:, 1:] += lam * np.eye(p)
        rhs = (X1 * wirls[:, None]).T @ z
        try:
            new = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            new, _, _, _ = np.linalg.lstsq(gram, rhs, rcond=None)
        if not np.all(np.isfinite(new)):
            return coef, False
        step = float(np.max(np.abs(new - coef)))
        coef = new
        if step < tol:
            return coef, True
    return coef, False


def fit_logistic_lasso(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    lam: float,
    max_outer: int = 50,
    tol: float = IRLS_TOL,
) -> tuple[np.ndarray, bool]:
    """L1-penalized logistic regression: IRLS outer loop, coordinate descent
    on each weighted quadratic approximation. A small L2 floor on the slopes
    keeps separable problems bounded."""
    if lam < 0:
        raise ValueError(f"lasso penalty must be >= 0, got {lam}")
    n, p = X.shape
    coef = np.zeros(p + 1)
    for _ in range(max_outer):
        eta = coef[0] + X @ coef[1:]
        mu = sigmoid(eta)
        s = np.clip(mu * (1.0 - mu), 1e-10, None)
        wirls = w * s
        total = wirls.sum()
        z = eta + (y - mu) / s
        new = _penalized_quadratic_cd(X, z, wirls / total, lam / total, coef.copy())
        if not np.all(np.isfinite(new)):
            return coef, False
        step = float(np.max(np.abs(new - coef)))
        coef = new
        if step < tol:
            return coef, True
    return coef, False


def _penalized_quadratic_cd(
    X: np.ndarray,
    z: np.ndarray,
    w: np.ndarray,
    lam: float,
    coef: np.ndarray,
    max_sweeps: int = 200,
    tol: float = 1e-10,
) -> np.ndarray:
    denom = w @ X**2 + LOGISTIC_L2_FLOOR
    beta = coef[1:]
    b0 = coef[0]
    r = z - b0 - X @ beta
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(X.shape[1]):
            old = beta[j]
            num = w @ (X[:, j] * r) + (denom[j] - LOGISTIC_L2_FLOOR) * old
            new = soft_threshold(num, lam) / denom[j]
            if new != old:
                r += X[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        new_b0 = b0 + float(w @ r)
        if new_b0 != b0:
            delta = max(delta, abs(new_b0 - b0))
            r += b0 - new_b0
            b0 = new_b0
        if delta < tol:
            break
    return np.concatenate([[b0], beta])


def linear_predict(coef: np.ndarray, X: np.ndarray) -> np.ndarray:
    return coef[0] + X @ coef[1:]
