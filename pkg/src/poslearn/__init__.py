"""Personalised online super learning for panel data.

Combines learners trained on an individual's own history with learners
trained on a historical pool, re-weighting them at every session through
leakage-free rolling cross-validation, and scores the resulting dynamic
predictions with accuracy, calibration, discrimination, and net-benefit
measures.
"""

from .ensemble import (
    AlphaWeights,
    MetaDataset,
    SlConfig,
    combine_and_truncate,
    convexify_weights,
    cumulative_weighted_loss,
    dsl_select,
    nnls,
    solve_nnls,
    time_weights,
)
from .engine import (
    PoslError,
    PoslModel,
    PredictionRecord,
    RunResult,
    TuneResult,
    build_model,
    fit_historical,
    posl_predict_next,
    prepare_series,
    run_individual,
    run_working_sample,
    tune_hyperparameters,
)
from .folds import Fold, FoldPlan, make_forward_plan, make_rocv, make_rwcv
from .learners import FittedLearner, LearnerSpec, fit, predict, rf_importance_screen
from .metrics import (
    CalibrationCurve,
    DecisionCurve,
    IndividualMetrics,
    PredictionPoint,
    accuracy_stats,
    auroc,
    calibration_curve,
    calibration_stats,
    decision_curve,
    individual_metrics,
    time_profiles,
)
from .panel import (
    ColumnSpec,
    FeatureConfig,
    FeatureRow,
    IndividualSeries,
    PanelDataset,
    PanelSchema,
    SessionRecord,
    build_features,
    build_next_features,
    load_panel_csv,
    load_schema,
    pool_fallbacks,
    split_tuning_working,
)
from .simulate import SimulationConfig, simulate_panel

__version__ = "0.1.0"
