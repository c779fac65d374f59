"""Leakage-free fold plans over an individual's session timeline.

Three schemes: rolling-origin (expanding training prefix), rolling-window
(fixed-width sliding training window), and the outer forward-validation plan
(train on everything before each predicted session). Every plan guarantees
max(train) < validation index.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

SCHEMES = ("rocv", "rwcv", "forward")


@dataclass(frozen=True)
class Fold:
    train: range
    validate: int

    def __post_init__(self) -> None:
        if len(self.train) == 0:
            raise ValueError("fold has empty training set")
        if self.train[-1] >= self.validate:
            raise ValueError(
                f"leaky fold: train up to {self.train[-1]}, validate {self.validate}"
            )


@dataclass(frozen=True)
class FoldPlan:
    scheme: str
    folds: tuple[Fold, ...]
    params: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        vals = [f.validate for f in self.folds]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("validation indices must be strictly increasing")

    @property
    def validation_sessions(self) -> tuple[int, ...]:
        return tuple(f.validate for f in self.folds)


def make_rocv(T: int, initial_size: int, horizon: int = 1) -> FoldPlan:
    """Expanding-origin plan: fold v trains on 1..initial_size+v-1.

    With horizon 1 the folds validate sessions initial_size+1 .. T.
    """
    if initial_size < 1:
        raise ValueError(f"initial_size must be >= 1, got {initial_size}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if T <= initial_size:
        raise ValueError(
            f"nothing to validate: T={T} <= initial_size={initial_size}"
        )
    folds = []
    end = initial_size
    while end + horizon <= T:
        folds.append(Fold(train=range(1, end + 1), validate=end + horizon))
        end += 1
    return FoldPlan(
        "rocv", tuple(folds), (("initial_size", initial_size), ("horizon", horizon))
    )


def make_rwcv(T: int, window_size: int, horizon: int = 1) -> FoldPlan:
    """Sliding-window plan: every training set has exactly window_size indices."""
    if window_size < 1:
        raise ValueError(f"window_size must be >= 1, got {window_size}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if T <= window_size:
        raise ValueError(f"nothing to validate: T={T} <= window_size={window_size}")
    folds = []
    start = 1
    while start + window_size - 1 + horizon <= T:
        end = start + window_size - 1
        folds.append(Fold(train=range(start, end + 1), validate=end + horizon))
        start += 1
    return FoldPlan(
        "rwcv", tuple(folds), (("window_size", window_size), ("horizon", horizon))
    )


def make_forward_plan(T: int, first_prediction: int = 12) -> FoldPlan:
    """Outer evaluation plan: predict each session from first_prediction..T
    after training on the full prefix before it."""
    if first_prediction < 2:
        raise ValueError(f"first_prediction must be >= 2, got {first_prediction}")
    if T < first_prediction:
        raise ValueError(
            f"series too short: T={T} < first_prediction={first_prediction}"
        )
    folds = tuple(
        Fold(train=range(1, s), validate=s) for s in range(first_prediction, T + 1)
    )
    return FoldPlan("forward", folds, (("first_prediction", first_prediction),))


def fold_plan_rows(plan: FoldPlan) -> Iterable[tuple[int, str, int]]:
    """Audit rows (fold, role, session_index) for CSV export."""
    for v, fold in enumerate(plan.folds, start=1):
        for t in fold.train:
            yield v, "train", t
        yield v, "validate", fold.validate


def export_fold_plan_csv(plan: FoldPlan, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "role", "session_index"])
        writer.writerows(fold_plan_rows(plan))
