"""Synthetic panel generator standing in for unavailable clinical data.

Generative model, per individual i and session t:

    y[i,t] = 27 + 1.0*base_cont[i] - 0.8*base_flag[i] + u[i]
             + sum_j beta[j] * x[i,t-1,j] + drift_slope*t + noise

with u[i] ~ N(0, individual_effect_sd^2), noise ~ N(0, noise_sd^2), and
beta[j] = 1.5*(-1)^j/(1+j). Session covariates follow a zero-started AR(1),
x[t] = 0.6*x[t-1] + N(0, 0.8^2) with x[0] = 0, so the session-1 outcome has
no lagged-covariate contribution. Covariate cells (never outcomes) go missing
completely at random at ``missing_rate``; outcomes are clipped to
``outcome_bounds``. Byte-identical output for equal seeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import ColumnSpec, IndividualSeries, PanelDataset, PanelSchema, SessionRecord

INTERCEPT = 27.0
BASELINE_COEFS = (1.0, -0.8)
AR_COEF = 0.6
AR_NOISE_SD = 0.8


@dataclass(frozen=True)
class SimulationConfig:
    n_individuals: int = 10
    sessions_per_individual: tuple[int, int] = (30, 40)
    n_predictors: int = 3
    individual_effect_sd: float = 2.0
    drift_slope: float = 0.0
    noise_sd: float = 2.0
    missing_rate: float = 0.0
    outcome_bounds: tuple[float, float] = (0.0, 50.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_individuals < 1:
            raise ValueError("n_individuals must be >= 1")
        lo, hi = self.sessions_per_individual
        if not 1 <= lo <= hi:
            raise ValueError("sessions_per_individual must satisfy 1 <= lo <= hi")
        if self.n_predictors < 1:
            raise ValueError("n_predictors must be >= 1")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ValueError("missing_rate must be in [0,1]")
        for name in ("individual_effect_sd", "noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.outcome_bounds[0] >= self.outcome_bounds[1]:
            raise ValueError("outcome_bounds must be (lo, hi) with lo < hi")


def predictor_coefficients(n_predictors: int) -> np.ndarray:
    """Lag-1 covariate slopes of the generative model."""
    j = np.arange(n_predictors)
    return 1.5 * (-1.0) ** j / (1.0 + j)


def simulation_schema(n_predictors: int) -> PanelSchema:
    cols = [
        ColumnSpec("base_cont", "continuous", "baseline"),
        ColumnSpec("base_flag", "binary", "baseline"),
    ]
    cols += [
        ColumnSpec(f"x{j + 1}", "continuous", "session")
        for j in range(n_predictors)
    ]
    return PanelSchema(tuple(cols))


def linear_predictor(
    baseline: tuple[float, float],
    lagged_covariates: np.ndarray,
    t: int,
    individual_effect: float,
    drift_slope: float,
) -> float:
    """Noise-free outcome mean; the oracle for exact-recovery tests."""
    beta = predictor_coefficients(len(lagged_covariates))
    return float(
        INTERCEPT
        + BASELINE_COEFS[0] * baseline[0]
        + BASELINE_COEFS[1] * baseline[1]
        + individual_effect
        + beta @ lagged_covariates
        + drift_slope * t
    )


def simulate_panel(config: SimulationConfig) -> PanelDataset:
    """Draw a complete synthetic panel from the generative model above."""
    rng = np.random.default_rng(config.seed)
    lo, hi = config.sessions_per_individual
    beta = predictor_coefficients(config.n_predictors)
    individuals = []
    for i in range(config.n_individuals):
        t_i = int(rng.integers(lo, hi + 1))
        effect = float(rng.normal(0.0, config.individual_effect_sd))
        base_cont = float(rng.normal(0.0, 1.0))
        base_flag = float(rng.integers(0, 2))

        shocks = rng.normal(0.0, AR_NOISE_SD, size=(t_i, config.n_predictors))
        x = np.empty((t_i + 1, config.n_predictors))
        x[0] = 0.0
        for t in range(1, t_i + 1):
            x[t] = AR_COEF * x[t - 1] + shocks[t - 1]

        noise = rng.normal(0.0, config.noise_sd, size=t_i)
        missing = rng.random(size=(t_i, config.n_predictors)) < config.missing_rate

        sessions = []
        for t in range(1, t_i + 1):
            y = (
                INTERCEPT
                + BASELINE_COEFS[0] * base_cont
                + BASELINE_COEFS[1] * base_flag
                + effect
                + float(beta @ x[t - 1])
                + config.drift_slope * t
                + noise[t - 1]
            )
            y = float(np.clip(y, *config.outcome_bounds))
            covs = tuple(
                None if missing[t - 1, j] else float(x[t, j])
                for j in range(config.n_predictors)
            )
            sessions.append(SessionRecord(t, y, covs))
        individuals.append(
            IndividualSeries(f"i{i + 1:04d}", (base_cont, base_flag), tuple(sessions))
        )
    return PanelDataset(tuple(individuals), simulation_schema(config.n_predictors))
