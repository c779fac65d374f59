"""Candidate learner families behind one fit/predict contract.

Families: mean, linear, ridge, lasso, hinge_spline, gbt — each available for
continuous outcomes and, with logistic/probability semantics, for binary ones.
A spec may request random-forest importance screening, in which case fitting
first selects the top-k columns and the fitted model only ever reads those.

Convergence failures are reported in-band through ``FittedLearner.converged``
so the ensemble layer can apply its fold-disregard rule instead of aborting.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ..panel import FeatureRow, stack_rows
from . import linear as _lin
from . import spline as _spl
from . import trees as _trees
from .trees import ScreeningReport, rf_importance_screen

__all__ = [
    "FAMILIES",
    "LearnerSpec",
    "FittedLearner",
    "ScreeningReport",
    "fit",
    "predict",
    "rf_importance_screen",
    "fitted_to_dict",
    "fitted_from_dict",
    "dump_learner",
    "load_learner",
]

FAMILIES = ("mean", "linear", "ridge", "lasso", "hinge_spline", "gbt")
SCOPES = ("individual", "historical")
SCHEMES = ("rocv", "rwcv")
MODES = ("continuous", "binary")

_DEFAULTS: dict[str, dict[str, float]] = {
    "mean": {},
    "linear": {},
    "ridge": {"penalty": 1.0},
    "lasso": {"penalty": 0.1},
    "hinge_spline": {"max_basis": 10, "min_segment": 3, "gcv_penalty": 3.0},
    "gbt": {"rounds": 50, "depth": 3, "shrinkage": 0.1, "min_leaf": 5},
}
_SCREEN_DEFAULTS = {"screen_k": 5, "screen_trees": 200, "screen_min_leaf": 5}


@dataclass(frozen=True)
class LearnerSpec:
    """Identity and configuration of one candidate learner."""

    family: str
    hyperparameters: Mapping[str, float] = field(default_factory=dict)
    screened: bool = False
    scope: str = "individual"
    cv_scheme: Optional[str] = None
    outcome_mode: str = "continuous"

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown learner family {self.family!r}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.cv_scheme is not None:
            if self.scope != "individual":
                raise ValueError("cv_scheme applies to individual-scope learners only")
            if self.cv_scheme not in SCHEMES:
                raise ValueError(f"unknown cv scheme {self.cv_scheme!r}")
        if self.outcome_mode not in MODES:
            raise ValueError(f"unknown outcome mode {self.outcome_mode!r}")
        hp = self.resolved_hyperparameters()
        if hp.get("penalty", 0.0) < 0:
            raise ValueError("penalty must be >= 0")
        if hp.get("rounds", 0) < 0:
            raise ValueError("gbt rounds must be >= 0")
        if self.screened and hp["screen_k"] < 1:
            raise ValueError("screening requires screen_k >= 1")

    def resolved_hyperparameters(self) -> dict[str, float]:
        hp = dict(_DEFAULTS[self.family])
        hp.update(_SCREEN_DEFAULTS)
        hp.update(self.hyperparameters)
        return hp

    @property
    def learner_id(self) -> str:
        parts = ["ind" if self.scope == "individual" else "hist", self.family]
        if self.screened:
            parts.append("rf")
        if self.cv_scheme is not None:
            parts.append(self.cv_scheme)
        return "_".join(parts)


@dataclass
class FittedLearner:
    """A trained candidate: family parameters plus the convergence flag."""

    spec: LearnerSpec
    parameters: dict
    n_features: int
    selected_features: Optional[tuple[int, ...]] = None
    converged: bool = True


def _as_matrix(rows: Sequence[FeatureRow] | np.ndarray) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        X = np.asarray(rows, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"design matrix must be 2-d, got shape {X.shape}")
        return X
    return stack_rows(rows)


def fit(
    spec: LearnerSpec,
    rows: Sequence[FeatureRow] | np.ndarray,
    targets: Sequence[float] | np.ndarray,
    weights: Optional[np.ndarray] = None,
    seed: int = 0,
) -> FittedLearner:
    """Train one candidate learner on weighted rows.

    Accepts either FeatureRow sequences (values and missingness indicators are
    concatenated) or a pre-built design matrix.
    """
    X = _as_matrix(rows)
    y = np.asarray(targets, dtype=float)
    n = len(y)
    if n == 0:
        raise ValueError("cannot fit on empty input")
    if X.shape[0] != n:
        raise ValueError(f"{X.shape[0]} rows vs {n} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    binary = spec.outcome_mode == "binary"
    if binary and not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("binary mode requires targets in {0, 1}")
    w = _lin.normalized_weights(n, weights)
    hp = spec.resolved_hyperparameters()

    selected: Optional[tuple[int, ...]] = None
    X_fit = X
    if spec.screened and spec.family != "mean":
        k = min(int(hp["screen_k"]), X.shape[1])
        report = rf_importance_screen(
            X, y, k=k,
            n_trees=int(hp["screen_trees"]),
            seed=seed,
            min_leaf=int(hp["screen_min_leaf"]),
        )
        selected = report.selected
        X_fit = X[:, list(selected)]

    params, converged = _fit_family(spec.family, X_fit, y, w, hp, binary, seed)
    return FittedLearner(
        spec=spec,
        parameters=params,
        n_features=X.shape[1],
        selected_features=selected,
        converged=converged,
    )


def _fit_family(
    family: str,
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    hp: Mapping[str, float],
    binary: bool,
    seed: int,
) -> tuple[dict, bool]:
    if family == "mean":
        return {"value": _lin.weighted_mean(y, w)}, True
    if family == "linear":
        if binary:
            coef, ok = _lin.fit_logistic_ridge(X, y, w, lam=0.0)
        else:
            coef, ok = _lin.fit_wls(X, y, w)
        return {"coef": coef}, ok
    if family == "ridge":
        lam = float(hp["penalty"])
        if binary:
            coef, ok = _lin.fit_logistic_ridge(X, y, w, lam=lam)
        else:
            coef, ok = _lin.fit_ridge(X, y, w, lam=lam)
        return {"coef": coef}, ok
    if family == "lasso":
        lam = float(hp["penalty"])
        if binary:
            coef, ok = _lin.fit_logistic_lasso(X, y, w, lam=lam)
        else:
            coef, ok = _lin.fit_lasso(X, y, w, lam=lam)
        return {"coef": coef}, ok
    if family == "hinge_spline":
        terms, coef, ok = _spl.fit_hinge_spline(
            X, y, w,
            max_basis=int(hp["max_basis"]),
            min_segment=int(hp["min_segment"]),
            gcv_penalty=float(hp["gcv_penalty"]),
        )
        return {"terms": terms, "coef": coef, "binary": binary}, ok
    if family == "gbt":
        model = _trees.fit_gbt(
            X, y, w,
            n_rounds=int(hp["rounds"]),
            max_depth=int(hp["depth"]),
            shrinkage=float(hp["shrinkage"]),
            min_leaf=int(hp["min_leaf"]),
            binary=binary,
        )
        return {"model": model}, True
    raise ValueError(f"unknown learner family {family!r}")


def predict(
    fitted: FittedLearner, rows: Sequence[FeatureRow] | np.ndarray
) -> np.ndarray:
    """Predictions for new rows; probabilities in [0,1] in binary mode."""
    if not fitted.converged:
        raise ValueError(
            f"refusing to predict with non-converged learner "
            f"{fitted.spec.learner_id}"
        )
    X = _as_matrix(rows)
    if X.shape[1] != fitted.n_features:
        raise ValueError(
            f"row arity {X.shape[1]} does not match training arity "
            f"{fitted.n_features}"
        )
    if fitted.selected_features is not None:
        X = X[:, list(fitted.selected_features)]

    family = fitted.spec.family
    binary = fitted.spec.outcome_mode == "binary"
    p = fitted.parameters
    if family == "mean":
        return np.full(len(X), p["value"])
    if family in ("linear", "ridge", "lasso"):
        eta = _lin.linear_predict(p["coef"], X)
        return _lin.sigmoid(eta) if binary else eta
    if family == "hinge_spline":
        out = _spl.spline_predict(p["terms"], p["coef"], X)
        return np.clip(out, 0.0, 1.0) if binary else out
    if family == "gbt":
        return p["model"].predict(X)
    raise ValueError(f"unknown learner family {family!r}")


# ---------------------------------------------------------------------------
# serialization: historical learners can be trained once and reloaded


def _spec_to_dict(spec: LearnerSpec) -> dict:
    return {
        "family": spec.family,
        "hyperparameters": dict(spec.hyperparameters),
        "screened": spec.screened,
        "scope": spec.scope,
        "cv_scheme": spec.cv_scheme,
        "outcome_mode": spec.outcome_mode,
    }


def _spec_from_dict(d: dict) -> LearnerSpec:
    return LearnerSpec(
        family=d["family"],
        hyperparameters=dict(d.get("hyperparameters", {})),
        screened=bool(d.get("screened", False)),
        scope=d.get("scope", "individual"),
        cv_scheme=d.get("cv_scheme"),
        outcome_mode=d.get("outcome_mode", "continuous"),
    )


def fitted_to_dict(fitted: FittedLearner) -> dict:
    family = fitted.spec.family
    p = fitted.parameters
    if family == "mean":
        params = {"value": p["value"]}
    elif family in ("linear", "ridge", "lasso"):
        params = {"coef": list(map(float, p["coef"]))}
    elif family == "hinge_spline":
        params = {
            "terms": [[int(j), float(c), int(d)] for j, c, d in p["terms"]],
            "coef": list(map(float, p["coef"])),
            "binary": bool(p["binary"]),
        }
    elif family == "gbt":
        model: _trees.BoostedTrees = p["model"]
        params = {
            "base_score": model.base_score,
            "shrinkage": model.shrinkage,
            "binary": model.binary,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in model.trees
            ],
        }
    else:
        raise ValueError(f"unknown learner family {family!r}")
    return {
        "spec": _spec_to_dict(fitted.spec),
        "n_features": fitted.n_features,
        "selected_features": (
            list(fitted.selected_features)
            if fitted.selected_features is not None
            else None
        ),
        "converged": fitted.converged,
        "parameters": params,
    }


def fitted_from_dict(d: dict) -> FittedLearner:
    spec = _spec_from_dict(d["spec"])
    family = spec.family
    raw = d["parameters"]
    if family == "mean":
        params: dict = {"value": float(raw["value"])}
    elif family in ("linear", "ridge", "lasso"):
        params = {"coef": np.asarray(raw["coef"], dtype=float)}
    elif family == "hinge_spline":
        params = {
            "terms": [(int(j), float(c), int(dd)) for j, c, dd in raw["terms"]],
            "coef": np.asarray(raw["coef"], dtype=float),
            "binary": bool(raw["binary"]),
        }
    elif family == "gbt":
        trees = [
            _trees.Tree(
                feature=np.asarray(t["feature"], dtype=int),
                threshold=np.asarray(t["threshold"], dtype=float),
                left=np.asarray(t["left"], dtype=int),
                right=np.asarray(t["right"], dtype=int),
                value=np.asarray(t["value"], dtype=float),
            )
            for t in raw["trees"]
        ]
        params = {
            "model": _trees.BoostedTrees(
                base_score=float(raw["base_score"]),
                shrinkage=float(raw["shrinkage"]),
                trees=trees,
                binary=bool(raw["binary"]),
            )
        }
    else:
        raise ValueError(f"unknown learner family {family!r}")
    sel = d.get("selected_features")
    return FittedLearner(
        spec=spec,
        parameters=params,
        n_features=int(d["n_features"]),
        selected_features=tuple(sel) if sel is not None else None,
        converged=bool(d["converged"]),
    )


def dump_learner(fitted: FittedLearner) -> str:
    return json.dumps(fitted_to_dict(fitted), sort_keys=True)


def load_learner(text: str) -> FittedLearner:
    return fitted_from_dict(json.loads(text))
