"""Meta-level machinery: recency weights, cumulative losses, the
non-negative-least-squares stacking weights, discrete selection, and
prediction combination with bound truncation.

The stacking regression has no intercept: the combined prediction is a plain
weighted sum of candidate predictions. The convex variant rescales the
unconstrained-sum solution onto the simplex after optimization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

LOSS_KINDS = ("squared", "negative_log_likelihood")
PROB_EPS = 1e-12


@dataclass(frozen=True)
class MetaDataset:
    """Out-of-fold candidate predictions paired with observed outcomes.

    Rows are validated person-times (for one individual, one per retained
    validation session); columns are candidate learners.
    """

    predictions: np.ndarray
    observed: np.ndarray
    time_weights: np.ndarray
    session_indices: np.ndarray
    learner_ids: tuple[str, ...]
    dropped_folds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        n, c = self.predictions.shape
        if c != len(self.learner_ids):
            raise ValueError("prediction columns do not match learner_ids")
        for name in ("observed", "time_weights", "session_indices"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match predictions rows")
        if n and not np.all(np.isfinite(self.predictions)):
            raise ValueError("retained meta rows must be finite")

    @property
    def n_rows(self) -> int:
        return self.predictions.shape[0]

    @property
    def n_learners(self) -> int:
        return self.predictions.shape[1]


@dataclass(frozen=True)
class AlphaWeights:
    """Non-negative stacking coefficients, optionally scaled to the simplex."""

    alpha: np.ndarray
    convexified: bool

    def __post_init__(self) -> None:
        if np.any(self.alpha < 0):
            raise ValueError("stacking weights must be non-negative")
        if self.convexified and abs(float(self.alpha.sum()) - 1.0) > 1e-9:
            raise ValueError("convexified weights must sum to 1")


@dataclass(frozen=True)
class SlConfig:
    """Super-learner configuration: losses, recency decay, and output bounds."""

    meta_kind: str = "esl_nonconvex"
    loss_kind: str = "squared"
    delta: float = 0.1
    recency_window: int = 5
    bounds: tuple[float, float] = (0.0, 50.0)

    def __post_init__(self) -> None:
        if self.meta_kind not in ("dsl", "esl_convex", "esl_nonconvex"):
            raise ValueError(f"unknown meta kind {self.meta_kind!r}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must be in [0, 1)")
        if self.recency_window < 0:
            raise ValueError("recency_window must be >= 0")
        if self.bounds[0] >= self.bounds[1]:
            raise ValueError("bounds must be (lo, hi) with lo < hi")


def time_weights(
    tau: int,
    sessions: Sequence[int] | np.ndarray,
    delta: float = 0.1,
    recency_window: int = 5,
) -> np.ndarray:
    """Recency weights: 1 inside the window, geometric (1-delta)^(tau-t) before.

    With delta = 0 every session weighs 1.
    """
    t = np.asarray(sessions, dtype=int)
    if np.any(t > tau):
        raise ValueError("sessions must not exceed tau")
    return np.where(t >= tau - recency_window, 1.0, (1.0 - delta) ** (tau - t))


def cumulative_weighted_loss(
    observed: np.ndarray,
    predicted: np.ndarray,
    omega: np.ndarray,
    loss_kind: str = "squared",
) -> float:
    """Weighted cumulative loss across validated sessions."""
    y = np.asarray(observed, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    w = np.asarray(omega, dtype=float)
    if not (len(y) == len(yhat) == len(w)):
        raise ValueError("observed, predicted, and omega lengths differ")
    if loss_kind == "squared":
        return float(w @ (y - yhat) ** 2)
    if loss_kind == "negative_log_likelihood":
        p = np.clip(yhat, PROB_EPS, 1.0 - PROB_EPS)
        return float(-(w @ (y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def nnls(A: np.ndarray, b: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Lawson-Hanson active-set non-negative least squares.

    Terminates when every zero coordinate has a non-positive descent gradient,
    so the returned point satisfies the KKT conditions of
    min ||A x - b||^2 over x >= 0 up to numerical tolerance.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, p = A.shape
    if max_iter is None:
        max_iter = 10 * max(p, 3)
    x = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    scale = float(np.max(np.abs(A.T @ b))) if p else 0.0
    tol = 1e-11 * max(1.0, scale)

    for _ in range(max_iter):
        grad = A.T @ (b - A @ x)
        candidates = ~passive & (grad > tol)
        if not np.any(candidates):
            break
        # most positive gradient enters; ties resolved by lowest index
        j = int(np.argmax(np.where(candidates, grad, -np.inf)))
        passive[j] = True
        while True:
            z = np.zeros(p)
            sub, _, _, _ = np.linalg.lstsq(A[:, passive], b, rcond=None)
            z[passive] = sub
            if np.all(z[passive] > 0):
                x = z
                break
            mask = passive & (z <= 0)
            steps = x[mask] / (x[mask] - z[mask])
            alpha = float(np.min(steps))
            x = x + alpha * (z - x)
            passive &= x > 1e-14
            x[~passive] = 0.0
    return x


def solve_nnls(meta: MetaDataset, convexify: bool) -> AlphaWeights:
    """Stacking weights minimizing the time-weighted squared error.

    Solves min_{alpha >= 0} sum_r w_r (y_r - P_r . alpha)^2 without intercept.
    When ``convexify``, the minimizer is divided by its sum afterwards (scaling
    happens after optimization, not as a constraint); an all-zero solution
    falls back to uniform weights.
    """
    if meta.n_rows < 1:
        raise ValueError("empty meta dataset")
    if meta.n_learners < 1:
        raise ValueError("meta dataset has no learner columns")
    sw = np.sqrt(meta.time_weights)
    alpha = nnls(meta.predictions * sw[:, None], meta.observed * sw)
    if convexify:
        return convexify_weights(alpha)
    return AlphaWeights(alpha=alpha, convexified=False)


def convexify_weights(alpha: np.ndarray) -> AlphaWeights:
    total = float(alpha.sum())
    if total > 0:
        return AlphaWeights(alpha=alpha / total, convexified=True)
    c = len(alpha)
    return AlphaWeights(alpha=np.full(c, 1.0 / c), convexified=True)


def dsl_select(meta: MetaDataset, loss_kind: str = "squared") -> int:
    """Index of the candidate minimizing the weighted cumulative loss; ties go
    to the lowest column index."""
    if meta.n_rows < 1:
        raise ValueError("empty meta dataset")
    losses = [
        cumulative_weighted_loss(
            meta.observed, meta.predictions[:, c], meta.time_weights, loss_kind
        )
        for c in range(meta.n_learners)
    ]
    return int(np.argmin(losses))


def combine_and_truncate(
    candidate_predictions: np.ndarray,
    alpha_or_choice: Union[AlphaWeights, np.ndarray, int],
    bounds: tuple[float, float],
) -> tuple[float, bool]:
    """Combine candidate predictions and clamp into bounds.

    An integer selects that candidate (discrete super learner); a weight
    vector produces the stacked combination. Returns (value, truncated flag).
    """
    preds = np.asarray(candidate_predictions, dtype=float)
    if not np.all(np.isfinite(preds)):
        raise ValueError("candidate predictions must be finite")
    if isinstance(alpha_or_choice, AlphaWeights):
        raw = float(alpha_or_choice.alpha @ preds)
    elif isinstance(alpha_or_choice, (int, np.integer)):
        raw = float(preds[int(alpha_or_choice)])
    else:
        weights = np.asarray(alpha_or_choice, dtype=float)
        raw = float(weights @ preds)
    lo, hi = bounds
    value = min(max(raw, lo), hi)
    return value, value != raw
