"""End-to-end orchestration of personalised online super learning.

For one individual at time tau the engine (1) replays the inner rolling
cross-validation plans over sessions 1..tau, (2) collects each candidate's
out-of-fold predictions into the meta-level dataset, (3) solves the discrete
selection and both stacking variants under recency weights, and (4) combines
the candidates' next-session predictions under each strategy.

Every prediction of a session u - whether an inner validation row or the
final next-session prediction - is computed from sessions strictly before u:
the predicted session's covariates are masked and imputed from history. This
makes the online property exact (the newest meta row at step tau+1 equals the
final candidate predictions of step tau) and guarantees that nothing at or
after the predicted session can influence the record.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .ensemble import (
    AlphaWeights,
    MetaDataset,
    SlConfig,
    combine_and_truncate,
    convexify_weights,
    cumulative_weighted_loss,
    dsl_select,
    solve_nnls,
    time_weights,
)
from .folds import make_rocv, make_rwcv
from .learners import FittedLearner, LearnerSpec, fit, predict
from .panel import (
    FeatureConfig,
    IndividualSeries,
    PanelDataset,
    PanelSchema,
    SessionRecord,
    build_features,
    build_next_features,
    pool_fallbacks,
    require_consecutive_sessions,
    series_prefix,
)

logger = logging.getLogger(__name__)

META_KINDS = ("dsl", "esl_convex", "esl_nonconvex")


class PoslError(RuntimeError):
    """Unrecoverable engine failure (as opposed to a skip signal)."""


@dataclass(frozen=True)
class PoslModel:
    """Frozen state shared by every prediction for one historical pool."""

    historical_fitted: tuple[FittedLearner, ...]
    library: tuple[LearnerSpec, ...]  # individual scope, scheme-expanded
    learner_ids: tuple[str, ...]  # individual columns first, then historical
    sl_config: SlConfig
    feature_config: FeatureConfig
    fallbacks: Mapping[str, float]
    schema: PanelSchema
    outcome_mode: str = "continuous"
    threshold: float = 24.0
    inner_initial_size: int = 5
    rwcv_window: int = 10
    seed: int = 0
    pool_ids: tuple[str, ...] = ()

    @property
    def n_candidates(self) -> int:
        return len(self.library) + len(self.historical_fitted)

    @property
    def min_tau(self) -> int:
        """Earliest tau with at least one complete meta row."""
        first = self.inner_initial_size + 1
        if any(s.cv_scheme == "rwcv" for s in self.library):
            first = max(first, self.rwcv_window + 1)
        return first


@dataclass(frozen=True)
class PredictionRecord:
    """Everything produced for one (individual, predicted session) pair."""

    individual_id: str
    session_index: int
    learner_ids: tuple[str, ...]
    candidate_predictions: np.ndarray
    alpha_convex: AlphaWeights
    alpha_nonconvex: AlphaWeights
    dsl_choice: str
    predictions: Mapping[str, tuple[float, bool]]  # kind -> (value, truncated)
    observed: Optional[float]
    n_meta_rows: int
    dropped_folds: int


@dataclass
class RunResult:
    records: list[PredictionRecord]
    skips: list[str]


@dataclass(frozen=True)
class TuneResult:
    """Winning hyperparameters and their mean CV loss, per family."""

    winners: Mapping[str, Mapping[str, float]]
    losses: Mapping[str, float]


# ---------------------------------------------------------------------------
# data preparation


def prepare_series(
    series: IndividualSeries, outcome_mode: str, threshold: float = 24.0
) -> IndividualSeries:
    """Apply the outcome policy and renumber sessions consecutively.

    Continuous mode drops sessions with a missing outcome; binary mode keeps
    every session and recodes the outcome as 1 when it reaches the threshold,
    0 otherwise (missing counts as unsuccessful).
    """
    if outcome_mode == "continuous":
        kept = [s for s in series.sessions if s.outcome is not None]
        if not kept:
            raise ValueError(
                f"individual {series.individual_id!r} has no observed outcomes"
            )
    elif outcome_mode == "binary":
        kept = [
            SessionRecord(
                s.session_index,
                1.0 if (s.outcome is not None and s.outcome >= threshold) else 0.0,
                s.covariates,
            )
            for s in series.sessions
        ]
    else:
        raise ValueError(f"unknown outcome mode {outcome_mode!r}")
    renumbered = tuple(
        SessionRecord(pos, s.outcome, s.covariates)
        for pos, s in enumerate(kept, start=1)
    )
    return IndividualSeries(series.individual_id, series.baseline, renumbered)


def _training_rows(
    series: IndividualSeries,
    schema: PanelSchema,
    config: FeatureConfig,
    fallbacks: Mapping[str, float],
) -> tuple[np.ndarray, np.ndarray]:
    rows = [
        build_features(series, t, fallbacks, schema, config)
        for t in range(1, series.n_sessions + 1)
    ]
    X = np.asarray(
        [np.concatenate([r.values, r.missing_indicators]) for r in rows], dtype=float
    )
    y = np.asarray([s.outcome for s in series.sessions], dtype=float)
    return X, y


def pooled_training_rows(
    individuals: Sequence[IndividualSeries],
    schema: PanelSchema,
    config: FeatureConfig,
    fallbacks: Mapping[str, float],
    outcome_mode: str,
    threshold: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Person-time design matrix and targets over a pool of individuals."""
    xs, ys = [], []
    for ind in individuals:
        prepared = prepare_series(ind, outcome_mode, threshold)
        X, y = _training_rows(prepared, schema, config, fallbacks)
        xs.append(X)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def _mix_seed(*parts: int) -> int:
    h = 0x9E3779B9
    for p in parts:
        h = (h ^ (int(p) + 0x9E3779B9 + ((h << 6) & 0xFFFFFFFF) + (h >> 2))) & 0xFFFFFFFF
    return h


# ---------------------------------------------------------------------------
# model construction


def expand_library(
    library: Sequence[LearnerSpec], outcome_mode: str
) -> tuple[list[LearnerSpec], list[LearnerSpec]]:
    """Split a library into (individual, historical) specs, duplicating each
    individual spec without an explicit scheme over both rolling schemes."""
    individual: list[LearnerSpec] = []
    historical: list[LearnerSpec] = []
    for spec in library:
        base = LearnerSpec(
            family=spec.family,
            hyperparameters=dict(spec.hyperparameters),
            screened=spec.screened,
            scope=spec.scope,
            cv_scheme=spec.cv_scheme,
            outcome_mode=outcome_mode,
        )
        if spec.scope == "historical":
            historical.append(base)
        elif spec.cv_scheme is not None:
            individual.append(base)
        else:
            for scheme in ("rocv", "rwcv"):
                individual.append(
                    LearnerSpec(
                        family=spec.family,
                        hyperparameters=dict(spec.hyperparameters),
                        screened=spec.screened,
                        scope="individual",
                        cv_scheme=scheme,
                        outcome_mode=outcome_mode,
                    )
                )
    return individual, historical


def _unique_ids(specs: Sequence[LearnerSpec]) -> list[str]:
    ids: list[str] = []
    seen: dict[str, int] = {}
    for spec in specs:
        base = spec.learner_id
        count = seen.get(base, 0) + 1
        seen[base] = count
        ids.append(base if count == 1 else f"{base}_{count}")
    return ids


def fit_historical(
    pool: PanelDataset,
    specs: Sequence[LearnerSpec],
    seed: int = 0,
    *,
    feature_config: FeatureConfig = FeatureConfig(),
    fallbacks: Optional[Mapping[str, float]] = None,
    outcome_mode: str = "continuous",
    threshold: float = 24.0,
) -> list[FittedLearner]:
    """Fit historical-scope learners once on all person-time rows of a pool.

    Learners that fail to converge are excluded with a warning; if none
    converge the run cannot proceed.
    """
    if pool.n_individuals == 0:
        raise ValueError("historical pool is empty")
    for spec in specs:
        if spec.scope != "historical":
            raise ValueError(f"{spec.learner_id} is not historical-scope")
    if fallbacks is None:
        fallbacks = pool_fallbacks(pool)
    X, y = pooled_training_rows(
        pool.individuals, pool.schema, feature_config, fallbacks,
        outcome_mode, threshold,
    )
    fitted = []
    for pos, spec in enumerate(specs):
        model = fit(spec, X, y, seed=_mix_seed(seed, pos))
        if not model.converged:
            logger.warning(
                "historical learner %s failed to converge; excluded", spec.learner_id
            )
            continue
        fitted.append(model)
    if specs and not fitted:
        raise PoslError("no historical learner converged")
    return fitted


def build_model(
    pool: PanelDataset,
    library: Sequence[LearnerSpec],
    *,
    sl_config: Optional[SlConfig] = None,
    feature_config: FeatureConfig = FeatureConfig(),
    inner_initial_size: int = 5,
    rwcv_window: int = 10,
    outcome_mode: str = "continuous",
    threshold: float = 24.0,
    seed: int = 0,
) -> PoslModel:
    """Assemble a ready-to-predict model from a pool and a learner library."""
    if sl_config is None:
        bounds = (0.0, 1.0) if outcome_mode == "binary" else (0.0, 50.0)
        loss = "negative_log_likelihood" if outcome_mode == "binary" else "squared"
        sl_config = SlConfig(loss_kind=loss, bounds=bounds)
    individual, historical = expand_library(library, outcome_mode)
    if not individual and not historical:
        raise ValueError("learner library is empty")
    fallbacks = pool_fallbacks(pool)
    fitted = fit_historical(
        pool, historical, seed,
        feature_config=feature_config, fallbacks=fallbacks,
        outcome_mode=outcome_mode, threshold=threshold,
    )
    ids = _unique_ids(list(individual) + [f.spec for f in fitted])
    return PoslModel(
        historical_fitted=tuple(fitted),
        library=tuple(individual),
        learner_ids=tuple(ids),
        sl_config=sl_config,
        feature_config=feature_config,
        fallbacks=dict(fallbacks),
        schema=pool.schema,
        outcome_mode=outcome_mode,
        threshold=threshold,
        inner_initial_size=inner_initial_size,
        rwcv_window=rwcv_window,
        seed=seed,
        pool_ids=tuple(i.individual_id for i in pool.individuals),
    )


# ---------------------------------------------------------------------------
# per-individual prediction


class SeriesState:
    """Precomputed feature rows and memoized candidate predictions for one
    prepared series. Candidate predictions for a session depend only on data
    strictly before it, so the memo is valid across successive tau."""

    def __init__(self, model: PoslModel, series: IndividualSeries):
        require_consecutive_sessions(series)
        if any(s.outcome is None for s in series.sessions):
            raise ValueError(
                "series must be prepared (no missing outcomes); "
                "see prepare_series"
            )
        self.series = series
        self.model = model
        self.X, self.y = _training_rows(
            series, model.schema, model.feature_config, model.fallbacks
        )
        T = series.n_sessions
        self.next_rows: dict[int, np.ndarray] = {}
        for v in range(2, T + 2):
            row = build_next_features(
                series_prefix(series, v - 1),
                model.fallbacks,
                model.schema,
                model.feature_config,
            )
            self.next_rows[v] = np.concatenate(
                [row.values, row.missing_indicators]
            )[None, :]
        self._memo: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def candidates(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(predictions, converged flags) for session v across all candidates."""
        if v in self._memo:
            return self._memo[v]
        model = self.model
        row = self.next_rows[v]
        preds = np.full(model.n_candidates, np.nan)
        conv = np.zeros(model.n_candidates, dtype=bool)
        for pos, spec in enumerate(model.library):
            if spec.cv_scheme == "rwcv":
                start = v - model.rwcv_window
                if start < 1:
                    continue  # undefined: window does not fit
                sl = slice(start - 1, v - 1)
            else:
                sl = slice(0, v - 1)
            fitted = fit(
                spec, self.X[sl], self.y[sl], seed=_mix_seed(model.seed, pos, v)
            )
            if fitted.converged:
                preds[pos] = float(predict(fitted, row)[0])
                conv[pos] = np.isfinite(preds[pos])
        offset = len(model.library)
        for pos, fitted in enumerate(model.historical_fitted):
            preds[offset + pos] = float(predict(fitted, row)[0])
            conv[offset + pos] = np.isfinite(preds[offset + pos])
        self._memo[v] = (preds, conv)
        return self._memo[v]


def _meta_sessions(model: PoslModel, tau: int) -> list[int]:
    """Sessions validated by every rolling scheme present in the library."""
    schemes = {s.cv_scheme for s in model.library}
    sets: list[set[int]] = []
    if "rocv" in schemes or not schemes:
        if tau <= model.inner_initial_size:
            return []
        sets.append(set(make_rocv(tau, model.inner_initial_size).validation_sessions))
    if "rwcv" in schemes:
        if tau <= model.rwcv_window:
            return []
        sets.append(set(make_rwcv(tau, model.rwcv_window).validation_sessions))
    out = set.intersection(*sets) if sets else set()
    return sorted(out)


def posl_predict_next(
    model: PoslModel,
    series: IndividualSeries,
    tau: int,
    state: Optional[SeriesState] = None,
) -> PredictionRecord:
    """Predict session tau+1 of a prepared series from sessions 1..tau.

    Rebuilding the meta dataset from the fold plans here gives the same rows
    as the incremental accumulation in run_individual; both paths share the
    per-session candidate computation.
    """
    if state is None:
        state = SeriesState(model, series)
    T = series.n_sessions
    if not model.inner_initial_size + 1 <= tau <= T:
        raise ValueError(
            f"tau={tau} out of range {model.inner_initial_size + 1}..{T}"
        )

    sessions = _meta_sessions(model, tau)
    rows, row_sessions, dropped = [], [], []
    for v in sessions:
        preds, conv = state.candidates(v)
        if np.all(conv):
            rows.append(preds)
            row_sessions.append(v)
        else:
            dropped.append(v)
    if dropped:
        logger.info(
            "individual %s tau=%d: disregarded folds at sessions %s",
            series.individual_id, tau, dropped,
        )
    if not rows:
        raise PoslError(
            f"insufficient usable folds for individual "
            f"{series.individual_id!r} at tau={tau}"
        )

    meta = MetaDataset(
        predictions=np.asarray(rows),
        observed=state.y[np.asarray(row_sessions) - 1],
        time_weights=time_weights(
            tau, row_sessions, model.sl_config.delta, model.sl_config.recency_window
        ),
        session_indices=np.asarray(row_sessions),
        learner_ids=model.learner_ids,
        dropped_folds=tuple(dropped),
    )

    alpha_nc = solve_nnls(meta, convexify=False)
    alpha_c = convexify_weights(alpha_nc.alpha)
    dsl_idx = dsl_select(meta, model.sl_config.loss_kind)

    final_preds, final_conv = state.candidates(tau + 1)
    nc_alpha, c_alpha, dsl_idx = _mask_unusable(
        meta, model, alpha_nc, alpha_c, dsl_idx, final_conv
    )
    safe_preds = np.where(final_conv, final_preds, 0.0)

    bounds = model.sl_config.bounds
    predictions = {
        "dsl": combine_and_truncate(safe_preds, dsl_idx, bounds),
        "esl_convex": combine_and_truncate(safe_preds, c_alpha, bounds),
        "esl_nonconvex": combine_and_truncate(safe_preds, nc_alpha, bounds),
    }
    observed = (
        float(series.sessions[tau].outcome) if tau + 1 <= T else None
    )
    return PredictionRecord(
        individual_id=series.individual_id,
        session_index=tau + 1,
        learner_ids=model.learner_ids,
        candidate_predictions=final_preds,
        alpha_convex=c_alpha,
        alpha_nonconvex=nc_alpha,
        dsl_choice=model.learner_ids[dsl_idx],
        predictions=predictions,
        observed=observed,
        n_meta_rows=meta.n_rows,
        dropped_folds=len(dropped),
    )


def _mask_unusable(
    meta: MetaDataset,
    model: PoslModel,
    alpha_nc: AlphaWeights,
    alpha_c: AlphaWeights,
    dsl_idx: int,
    usable: np.ndarray,
) -> tuple[AlphaWeights, AlphaWeights, int]:
    """Zero out candidates whose final refit failed; re-pick the discrete
    choice among usable columns when needed."""
    if np.all(usable):
        return alpha_nc, alpha_c, dsl_idx
    logger.warning(
        "final refit failed for %s; removed from combination",
        [model.learner_ids[i] for i in np.nonzero(~usable)[0]],
    )
    nc = np.where(usable, alpha_nc.alpha, 0.0)
    alpha_nc = AlphaWeights(alpha=nc, convexified=False)
    c = np.where(usable, alpha_c.alpha, 0.0)
    total = float(c.sum())
    if total > 0:
        c = c / total
    else:
        c = usable.astype(float) / usable.sum()
    alpha_c = AlphaWeights(alpha=c, convexified=True)
    if not usable[dsl_idx]:
        losses = [
            cumulative_weighted_loss(
                meta.observed,
                meta.predictions[:, i],
                meta.time_weights,
                model.sl_config.loss_kind,
            )
            if usable[i]
            else np.inf
            for i in range(meta.n_learners)
        ]
        dsl_idx = int(np.argmin(losses))
    return alpha_nc, alpha_c, dsl_idx


def run_individual(
    model: PoslModel,
    series: IndividualSeries,
    first_prediction: int = 12,
    *,
    prepared: bool = False,
) -> list[PredictionRecord]:
    """Forward validation: one record per session first_prediction..T,
    each predicted strictly from the data before it. Individuals too short
    to reach the first prediction are skipped, not failed."""
    work = series if prepared else prepare_series(
        series, model.outcome_mode, model.threshold
    )
    if work.n_sessions < first_prediction:
        logger.info(
            "individual %s skipped: %d sessions < first_prediction=%d",
            work.individual_id, work.n_sessions, first_prediction,
        )
        return []
    state = SeriesState(model, work)
    return [
        posl_predict_next(model, work, tau, state)
        for tau in range(first_prediction - 1, work.n_sessions)
    ]


def run_working_sample(
    model_factory: Callable[[PanelDataset], PoslModel],
    working: PanelDataset,
    first_prediction: int = 12,
    *,
    shared_pool: bool = False,
) -> RunResult:
    """Leave-one-individual-out forward validation over a working sample.

    For each individual the historical pool is every other working individual
    (or, with ``shared_pool``, one model trained on all of them - a mild
    optimism traded for speed).
    """
    if working.n_individuals < 2:
        raise ValueError("working sample needs at least 2 individuals")
    records: list[PredictionRecord] = []
    skips: list[str] = []
    shared_model = model_factory(working) if shared_pool else None
    for ind in working.individuals:
        if shared_model is not None:
            model = shared_model
        else:
            pool = PanelDataset(
                tuple(
                    o for o in working.individuals
                    if o.individual_id != ind.individual_id
                ),
                working.schema,
            )
            model = model_factory(pool)
            if ind.individual_id in model.pool_ids:
                raise PoslError(
                    f"leave-one-out violation: {ind.individual_id!r} in own pool"
                )
        out = run_individual(model, ind, first_prediction)
        if out:
            records.extend(out)
        else:
            prepared_len = prepare_series(
                ind, model.outcome_mode, model.threshold
            ).n_sessions
            skips.append(
                f"individual_id={ind.individual_id} reason=too-short "
                f"sessions={prepared_len} required={first_prediction}"
            )
    records.sort(key=lambda r: (r.individual_id, r.session_index))
    return RunResult(records=records, skips=skips)


# ---------------------------------------------------------------------------
# hyperparameter tuning


def _complexity_key(family: str, params: Mapping[str, float]) -> tuple:
    if family in ("ridge", "lasso"):
        return (-params.get("penalty", 0.0),)
    if family == "gbt":
        return (
            params.get("rounds", 0),
            params.get("depth", 0),
            -params.get("min_leaf", 0),
            params.get("shrinkage", 0.0),
        )
    if family == "hinge_spline":
        return (params.get("max_basis", 0), -params.get("min_segment", 0))
    return ()


def tune_hyperparameters(
    tuning: PanelDataset,
    grid: Mapping[str, Sequence[Mapping[str, float]]],
    seed: int = 0,
    *,
    feature_config: FeatureConfig = FeatureConfig(),
    outcome_mode: str = "continuous",
    threshold: float = 24.0,
    n_folds: int = 10,
) -> TuneResult:
    """Pick per-family hyperparameters by cross-validation split by individual.

    Pooled person-time rows, squared loss (continuous) or negative
    log-likelihood (binary); ties go to the simpler configuration.
    """
    if tuning.n_individuals == 0:
        raise ValueError("tuning sample is empty")
    for family, points in grid.items():
        if not points:
            raise ValueError(f"empty hyperparameter grid for family {family!r}")

    ids = sorted(i.individual_id for i in tuning.individuals)
    folds = min(n_folds, len(ids))
    if folds < n_folds:
        logger.warning(
            "only %d individuals: reducing tuning folds from %d to %d",
            len(ids), n_folds, folds,
        )
    rng = np.random.default_rng(seed)
    groups = np.array_split(rng.permutation(len(ids)), folds)
    by_id = {i.individual_id: i for i in tuning.individuals}

    split_data = []
    for g in groups:
        val_ids = {ids[k] for k in g}
        train_inds = [by_id[i] for i in ids if i not in val_ids]
        val_inds = [by_id[i] for i in ids if i in val_ids]
        if not train_inds or not val_inds:
            continue
        fb = pool_fallbacks(PanelDataset(tuple(train_inds), tuning.schema))
        Xtr, ytr = pooled_training_rows(
            train_inds, tuning.schema, feature_config, fb, outcome_mode, threshold
        )
        Xva, yva = pooled_training_rows(
            val_inds, tuning.schema, feature_config, fb, outcome_mode, threshold
        )
        split_data.append((Xtr, ytr, Xva, yva))
    if not split_data:
        raise ValueError("tuning needs at least 2 individuals")

    loss_kind = (
        "negative_log_likelihood" if outcome_mode == "binary" else "squared"
    )
    winners: dict[str, dict[str, float]] = {}
    losses: dict[str, float] = {}
    for family, points in grid.items():
        ordered = sorted(points, key=lambda p: _complexity_key(family, p))
        best_loss, best_params = np.inf, None
        for params in ordered:
            spec = LearnerSpec(
                family=family,
                hyperparameters=dict(params),
                scope="historical",
                outcome_mode=outcome_mode,
            )
            fold_losses = []
            for k, (Xtr, ytr, Xva, yva) in enumerate(split_data):
                fitted = fit(spec, Xtr, ytr, seed=_mix_seed(seed, k))
                if not fitted.converged:
                    fold_losses.append(np.inf)
                    continue
                pred = predict(fitted, Xva)
                fold_losses.append(
                    cumulative_weighted_loss(
                        yva, pred, np.ones(len(yva)), loss_kind
                    ) / len(yva)
                )
            mean_loss = float(np.mean(fold_losses))
            if mean_loss < best_loss:
                best_loss, best_params = mean_loss, dict(params)
        winners[family] = best_params if best_params is not None else {}
        losses[family] = best_loss
    return TuneResult(winners=winners, losses=losses)
