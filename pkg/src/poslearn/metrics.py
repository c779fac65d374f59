"""Performance measures: accuracy, calibration, discrimination, net benefit,
and session-wise time profiles.

Conventions. The calibration intercept is the mean of observed minus
predicted (calibration-in-the-large with the slope pinned at 1); the
calibration slope is the ordinary least-squares slope of observed on
predicted. AUROC is the tie-corrected pair concordance probability with an
optional Hanley-McNeil 95% interval. Net benefit is
TP/n - FP/n * w with sample-proportion rates and an odds weight that is either
the outcome-prevalence odds p/(1-p) or (for probability scores) the
threshold odds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

Z_95 = 1.959963984540054


class UndefinedMetric(ValueError):
    """Raised when a metric is undefined for the given inputs (signalled,
    never silently defaulted)."""


class PredictionPoint(NamedTuple):
    """One (individual, session) observation-prediction pair."""

    individual_id: str
    session_index: int
    observed: float
    predicted: float


@dataclass(frozen=True)
class IndividualMetrics:
    individual_id: str
    mdae: float
    mse: float
    calib_intercept: float
    calib_slope: Optional[float]
    auroc: Optional[float]
    n: int


@dataclass(frozen=True)
class CalibrationCurve:
    points: tuple[tuple[float, float], ...]  # (predicted, smoothed observed)
    method: str


@dataclass(frozen=True)
class DecisionCurve:
    thresholds: np.ndarray
    net_benefit: np.ndarray
    prevalence: float


def _paired(observed, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(observed, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError("observed and predicted must be equal-length vectors")
    return y, yhat


def accuracy_stats(observed, predicted) -> tuple[float, float]:
    """(median absolute error, mean squared error) of paired predictions."""
    y, yhat = _paired(observed, predicted)
    if len(y) == 0:
        raise ValueError("empty input")
    residuals = y - yhat
    return float(np.median(np.abs(residuals))), float(np.mean(residuals**2))


def calibration_stats(observed, predicted) -> tuple[float, Optional[float]]:
    """(calibration intercept, calibration slope).

    The slope is None when the predictions are constant (no variance to
    regress on); the intercept remains valid.
    """
    y, yhat = _paired(observed, predicted)
    if len(y) < 2:
        raise ValueError("calibration needs at least 2 points")
    intercept = float(np.mean(y - yhat))
    var = float(np.var(yhat))
    if var <= 0:
        return intercept, None
    slope = float(np.cov(yhat, y, bias=True)[0, 1] / var)
    return intercept, slope


def _tricube(u: np.ndarray) -> np.ndarray:
    a = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - a**3) ** 3


def loess_smooth(
    x: np.ndarray, y: np.ndarray, grid: np.ndarray, span: float
) -> np.ndarray:
    """Tricube-weighted local linear regression evaluated on a grid.

    ``span`` is the fraction of points in each local window (nearest
    neighbours), the usual loess convention.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    k = max(2, int(np.ceil(span * n)))
    out = np.empty(len(grid))
    for i, g in enumerate(grid):
        d = np.abs(x - g)
        cutoff = np.partition(d, min(k, n) - 1)[min(k, n) - 1]
        if cutoff <= 0:
            out[i] = float(np.mean(y[d == 0]))
            continue
        w = _tricube(d / cutoff)
        sw = w.sum()
        xm = (w @ x) / sw
        ym = (w @ y) / sw
        sxx = w @ (x - xm) ** 2
        if sxx <= 1e-12:
            out[i] = ym
        else:
            beta = (w @ ((x - xm) * (y - ym))) / sxx
            out[i] = ym + beta * (g - xm)
    return out


def calibration_curve(
    observed,
    predicted,
    method: str = "binned",
    resolution: int = 10,
) -> CalibrationCurve:
    """Flexible calibration curve of observed against predicted.

    ``binned``: equal-count bins of the predictions, one point per bin at
    (bin mean predicted, bin mean observed). ``local_linear``: tricube local
    regression evaluated on an even grid of ``resolution`` points.
    """
    y, yhat = _paired(observed, predicted)
    n = len(y)
    if method == "binned":
        n_bins = max(1, min(resolution, n // 2))
        if n < 2:
            raise ValueError("binned curve needs at least 2 points per bin")
        order = np.argsort(yhat, kind="stable")
        splits = np.array_split(order, n_bins)
        pts = tuple(
            (float(np.mean(yhat[s])), float(np.mean(y[s])))
            for s in splits
            if len(s) > 0
        )
        return CalibrationCurve(points=pts, method="binned")
    if method == "local_linear":
        if n < 10:
            raise ValueError("local_linear curve needs at least 10 points")
        grid = np.linspace(float(yhat.min()), float(yhat.max()), resolution)
        smoothed = loess_smooth(yhat, y, grid, span=0.3)
        pts = tuple((float(g), float(s)) for g, s in zip(grid, smoothed))
        return CalibrationCurve(points=pts, method="local_linear")
    raise ValueError(f"unknown calibration curve method {method!r}")


def auroc(
    observed_binary, scores, ci: bool = False
) -> tuple[float, Optional[tuple[float, float]]]:
    """Area under the ROC curve by tie-corrected pair counting.

    Equals (concordant + 0.5*tied) / (positives * negatives). With ``ci``,
    returns the Hanley-McNeil 95% interval as well.
    """
    y = np.asarray(observed_binary, dtype=float)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores must be equal length")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be binary 0/1")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUROC undefined: single-class input")

    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    rank = 1
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (rank + rank + (j - i))
        rank += j - i + 1
        i = j + 1
    auc = float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    if not ci:
        return auc, None
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc**2 / (1.0 + auc)
    var = (
        auc * (1 - auc)
        + (n_pos - 1) * (q1 - auc**2)
        + (n_neg - 1) * (q2 - auc**2)
    ) / (n_pos * n_neg)
    se = float(np.sqrt(max(var, 0.0)))
    return auc, (max(0.0, auc - Z_95 * se), min(1.0, auc + Z_95 * se))


def decision_curve(
    observed_binary,
    scores,
    thresholds,
    weight_mode: str = "prevalence_odds",
) -> DecisionCurve:
    """Net benefit of 'call positive when score >= threshold' across thresholds.

    ``prevalence_odds`` weights false positives by p/(1-p) with p the outcome
    prevalence; ``threshold_odds`` (probability scores only) uses the standard
    decision-curve weight t/(1-t).
    """
    y = np.asarray(observed_binary, dtype=float)
    s = np.asarray(scores, dtype=float)
    th = np.asarray(thresholds, dtype=float)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be binary 0/1")
    n = len(y)
    if n == 0 or y.shape != s.shape:
        raise ValueError("labels and scores must be equal-length, non-empty")
    p = float(y.mean())
    if weight_mode == "prevalence_odds":
        if p >= 1.0:
            raise UndefinedMetric("net benefit undefined: prevalence is 1")
        weights = np.full(len(th), p / (1.0 - p))
    elif weight_mode == "threshold_odds":
        if np.any(th >= 1.0) or np.any(th < 0.0):
            raise ValueError("threshold_odds needs thresholds in [0, 1)")
        weights = th / (1.0 - th)
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    nb = np.empty(len(th))
    for i, t in enumerate(th):
        called = s >= t
        tp = float(np.sum(called & (y == 1.0)))
        fp = float(np.sum(called & (y == 0.0)))
        nb[i] = tp / n - fp / n * weights[i]
    return DecisionCurve(thresholds=th, net_benefit=nb, prevalence=p)


def individual_metrics(
    individual_id: str,
    observed,
    predicted,
    *,
    binarize_threshold: Optional[float] = None,
) -> IndividualMetrics:
    """All per-individual measures; AUROC binarizes the observed outcome when
    a threshold is given, and is None when only one class is present."""
    y, yhat = _paired(observed, predicted)
    mdae, mse = accuracy_stats(y, yhat)
    if len(y) >= 2:
        intercept, slope = calibration_stats(y, yhat)
    else:
        intercept, slope = float(np.mean(y - yhat)), None
    labels = y if binarize_threshold is None else (y >= binarize_threshold).astype(float)
    try:
        auc, _ = auroc(labels, yhat)
    except (UndefinedMetric, ValueError):
        auc = None
    return IndividualMetrics(
        individual_id=individual_id,
        mdae=mdae,
        mse=mse,
        calib_intercept=intercept,
        calib_slope=slope,
        auroc=auc,
        n=len(y),
    )


TIME_PROFILE_METRICS = ("mdae", "calib_intercept", "calib_slope")


def time_profiles(
    points: Sequence[PredictionPoint],
    metric: str = "mdae",
    smoothing_span: float = 0.0,
) -> list[tuple[int, float]]:
    """Metric across individuals at each session offset since first prediction.

    Per offset, mdae is the median absolute error and calib_intercept the
    median residual across individuals (medians blunt extreme predictions);
    calib_slope is the across-individual least-squares slope at that offset.
    A positive ``smoothing_span`` loess-smooths the resulting series.
    """
    if metric not in TIME_PROFILE_METRICS:
        raise ValueError(f"unknown profile metric {metric!r}")
    if not points:
        raise ValueError("no prediction points")
    first = min(p.session_index for p in points)
    by_offset: dict[int, list[PredictionPoint]] = {}
    for p in points:
        by_offset.setdefault(p.session_index - first + 1, []).append(p)

    profile: list[tuple[int, float]] = []
    for offset in sorted(by_offset):
        grp = by_offset[offset]
        obs = np.asarray([p.observed for p in grp])
        pred = np.asarray([p.predicted for p in grp])
        if metric == "mdae":
            value = float(np.median(np.abs(obs - pred)))
        elif metric == "calib_intercept":
            value = float(np.median(obs - pred))
        else:
            if len(grp) < 2 or float(np.var(pred)) <= 0:
                continue
            value = float(np.cov(pred, obs, bias=True)[0, 1] / np.var(pred))
        profile.append((offset, value))

    if smoothing_span > 0 and len(profile) >= 3:
        xs = np.asarray([s for s, _ in profile], dtype=float)
        ys = np.asarray([v for _, v in profile])
        smoothed = loess_smooth(xs, ys, xs, smoothing_span)
        profile = [(int(s), float(v)) for s, v in zip(xs, smoothed)]
    return profile
