"""Panel data model: schema, CSV ingestion, feature construction, splitting.

A panel is a set of individuals, each with baseline covariates and an ordered
series of sessions carrying time-varying covariates plus a repeated outcome.
All operations here are pure; datasets are immutable after construction and
safe to share across workers.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

KINDS = ("continuous", "binary", "categorical")
ROLES = ("baseline", "session", "outcome")

# Mandatory CSV columns that are not declared in the schema sidecar.
ID_COLUMN = "individual_id"
SESSION_COLUMN = "session_index"
OUTCOME_COLUMN = "outcome"


@dataclass(frozen=True)
class ColumnSpec:
    """One covariate column: its name, measurement kind, and temporal role."""

    name: str
    kind: str
    role: str
    levels: tuple[str, ...] = ()  # category labels, categorical columns only

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown column role {self.role!r} for {self.name!r}")


@dataclass(frozen=True)
class PanelSchema:
    """Ordered covariate column declarations for a panel CSV."""

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        reserved = {ID_COLUMN, SESSION_COLUMN, OUTCOME_COLUMN}
        clash = reserved.intersection(names)
        if clash:
            raise ValueError(f"schema redeclares mandatory columns: {sorted(clash)}")

    @property
    def baseline_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == "baseline")

    @property
    def session_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == "session")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class SessionRecord:
    """One session of one individual: 1-based index, outcome, covariate row."""

    session_index: int
    outcome: Optional[float]
    covariates: tuple[Optional[float], ...]

    def __post_init__(self) -> None:
        if self.session_index < 1:
            raise ValueError(f"session_index must be >= 1, got {self.session_index}")


@dataclass(frozen=True)
class IndividualSeries:
    """One individual's baseline covariates and time-ordered sessions."""

    individual_id: str
    baseline: tuple[Optional[float], ...]
    sessions: tuple[SessionRecord, ...]

    def __post_init__(self) -> None:
        if not self.sessions:
            raise ValueError(f"individual {self.individual_id!r} has no sessions")
        idx = [s.session_index for s in self.sessions]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(
                f"non-monotone session index for individual {self.individual_id!r}"
            )
        arities = {len(s.covariates) for s in self.sessions}
        if len(arities) > 1:
            raise ValueError(
                f"covariate arity varies within individual {self.individual_id!r}"
            )

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    def outcomes(self) -> list[Optional[float]]:
        return [s.outcome for s in self.sessions]


@dataclass(frozen=True)
class PanelDataset:
    """Immutable panel: individuals plus the covariate schema."""

    individuals: tuple[IndividualSeries, ...]
    schema: PanelSchema

    def __post_init__(self) -> None:
        ids = [i.individual_id for i in self.individuals]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate individual ids in dataset")
        arity = len(self.schema.session_columns)
        b_arity = len(self.schema.baseline_columns)
        for ind in self.individuals:
            if len(ind.baseline) != b_arity:
                raise ValueError(
                    f"baseline arity mismatch for individual {ind.individual_id!r}"
                )
            if ind.sessions and len(ind.sessions[0].covariates) != arity:
                raise ValueError(
                    f"session covariate arity mismatch for {ind.individual_id!r}"
                )

    @property
    def n_individuals(self) -> int:
        return len(self.individuals)

    def individual(self, individual_id: str) -> IndividualSeries:
        for ind in self.individuals:
            if ind.individual_id == individual_id:
                return ind
        raise KeyError(individual_id)


@dataclass(frozen=True)
class FeatureRow:
    """Fully numeric feature vector for one (individual, session) query.

    ``values`` holds the encoded covariates and history summaries;
    ``missing_indicators`` is aligned to the imputable source columns and is 1
    exactly where the source value was absent before imputation.
    """

    values: np.ndarray
    missing_indicators: np.ndarray
    session_index: int


@dataclass(frozen=True)
class FeatureConfig:
    """Feature construction knobs.

    History summaries are rolling means over the last ``window`` sessions
    strictly before the query session: one for the outcome and one per entry
    of ``covariate_windows`` (session-column name -> window length).
    """

    outcome_window: int = 36
    covariate_windows: Mapping[str, int] = field(default_factory=dict)
    include_session_index: bool = True

    def __post_init__(self) -> None:
        if self.outcome_window < 1:
            raise ValueError("outcome_window must be >= 1")
        for name, w in self.covariate_windows.items():
            if w < 1:
                raise ValueError(f"window for {name!r} must be >= 1")


# ---------------------------------------------------------------------------
# schema sidecar


def load_schema(path: str) -> PanelSchema:
    """Read the JSON sidecar declaring covariate columns (name -> kind/role)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    cols = []
    for name, meta in raw["columns"].items():
        cols.append(
            ColumnSpec(
                name=name,
                kind=meta["kind"],
                role=meta["role"],
                levels=tuple(meta.get("levels", ())),
            )
        )
    return PanelSchema(tuple(cols))


def schema_to_json(schema: PanelSchema) -> str:
    cols = {}
    for c in schema.columns:
        meta: dict = {"kind": c.kind, "role": c.role}
        if c.levels:
            meta["levels"] = list(c.levels)
        cols[c.name] = meta
    return json.dumps({"columns": cols}, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(raw: str, col: ColumnSpec, line_no: int) -> Optional[float]:
    raw = raw.strip()
    if raw == "":
        return None
    if col.kind == "categorical":
        if raw not in col.levels:
            raise ValueError(
                f"line {line_no}: value {raw!r} not in levels of column {col.name!r}"
            )
        return float(col.levels.index(raw))
    try:
        return float(raw)
    except ValueError as exc:
        raise ValueError(
            f"line {line_no}: cannot parse {raw!r} in column {col.name!r}"
        ) from exc


def _discover_levels(path: str, schema: PanelSchema) -> PanelSchema:
    """Assign category codes from sorted distinct values where undeclared."""
    pending = [c.name for c in schema.columns if c.kind == "categorical" and not c.levels]
    if not pending:
        return schema
    seen: dict[str, set[str]] = {n: set() for n in pending}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        for row in reader:
            for name in pending:
                raw = (row.get(name) or "").strip()
                if raw:
                    seen[name].add(raw)
    cols = tuple(
        replace(c, levels=tuple(sorted(seen[c.name]))) if c.name in pending else c
        for c in schema.columns
    )
    return PanelSchema(cols)


def _strip_comments(lines):
    for line in lines:
        if not line.startswith("#"):
            yield line


def load_panel_csv(path: str, schema: PanelSchema) -> PanelDataset:
    """Load a wide panel CSV (one row per person-session) against a schema.

    Empty cells become missing values. Rows must be grouped by individual with
    strictly increasing session indices; violations abort with the offending
    row identified.
    """
    schema = _discover_levels(path, schema)
    base_cols = schema.baseline_columns
    sess_cols = schema.session_columns

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(_strip_comments(fh))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        required = [ID_COLUMN, SESSION_COLUMN, OUTCOME_COLUMN] + [
            c.name for c in schema.columns
        ]
        missing_cols = [c for c in required if c not in header]
        if missing_cols:
            raise ValueError(f"{path}: header missing columns {missing_cols}")
        pos = {name: header.index(name) for name in required}

        series: dict[str, dict] = {}
        order: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"line {line_no}: expected {len(header)} cells, got {len(row)}"
                )
            ind_id = row[pos[ID_COLUMN]].strip()
            if not ind_id:
                raise ValueError(f"line {line_no}: empty individual_id")
            try:
                t = int(row[pos[SESSION_COLUMN]])
            except ValueError:
                raise ValueError(
                    f"line {line_no}: bad session_index {row[pos[SESSION_COLUMN]]!r}"
                ) from None
            outcome_raw = row[pos[OUTCOME_COLUMN]].strip()
            outcome = float(outcome_raw) if outcome_raw else None
            covs = tuple(
                _parse_cell(row[pos[c.name]], c, line_no) for c in sess_cols
            )
            base_vals = tuple(
                _parse_cell(row[pos[c.name]], c, line_no) for c in base_cols
            )

            if ind_id not in series:
                series[ind_id] = {"baseline": base_vals, "sessions": [], "last": 0}
                order.append(ind_id)
            entry = series[ind_id]
            if t == entry["last"]:
                raise ValueError(
                    f"line {line_no}: duplicate (individual, session) pair "
                    f"({ind_id!r}, {t})"
                )
            if t < entry["last"]:
                raise ValueError(
                    f"line {line_no}: non-monotone session index for {ind_id!r}"
                )
            if entry["baseline"] != base_vals:
                raise ValueError(
                    f"line {line_no}: baseline covariates vary within {ind_id!r}"
                )
            entry["sessions"].append(SessionRecord(t, outcome, covs))
            entry["last"] = t

    individuals = tuple(
        IndividualSeries(ind_id, series[ind_id]["baseline"], tuple(series[ind_id]["sessions"]))
        for ind_id in order
    )
    if not individuals:
        raise ValueError(f"{path}: no data rows")
    return PanelDataset(individuals, schema)


def _format_value(value: Optional[float], col: Optional[ColumnSpec]) -> str:
    if value is None:
        return ""
    if col is not None and col.kind == "categorical":
        return col.levels[int(value)]
    return repr(float(value))


def panel_to_csv(dataset: PanelDataset) -> str:
    """Serialize a panel back to the wide CSV layout (deterministic)."""
    schema = dataset.schema
    header = [ID_COLUMN, SESSION_COLUMN, OUTCOME_COLUMN]
    header += [c.name for c in schema.baseline_columns]
    header += [c.name for c in schema.session_columns]
    lines = [",".join(header)]
    for ind in dataset.individuals:
        base = [
            _format_value(v, c)
            for v, c in zip(ind.baseline, schema.baseline_columns)
        ]
        for rec in ind.sessions:
            cells = [ind.individual_id, str(rec.session_index)]
            cells.append(_format_value(rec.outcome, None))
            cells += base
            cells += [
                _format_value(v, c)
                for v, c in zip(rec.covariates, schema.session_columns)
            ]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# feature construction


def feature_names(schema: PanelSchema, config: FeatureConfig) -> list[str]:
    """Ordered names of FeatureRow.values columns."""
    names = [c.name for c in schema.baseline_columns]
    names += [c.name for c in schema.session_columns]
    names += _derived_names(schema, config)
    if config.include_session_index:
        names.append(SESSION_COLUMN)
    return names


def indicator_names(schema: PanelSchema, config: FeatureConfig) -> list[str]:
    """Ordered names of FeatureRow.missing_indicators columns."""
    sources = [c.name for c in schema.baseline_columns]
    sources += [c.name for c in schema.session_columns]
    sources += _derived_names(schema, config)
    return [f"miss_{n}" for n in sources]


def _derived_names(schema: PanelSchema, config: FeatureConfig) -> list[str]:
    names = [f"{OUTCOME_COLUMN}_mean{config.outcome_window}"]
    for c in schema.session_columns:
        if c.name in config.covariate_windows:
            names.append(f"{c.name}_mean{config.covariate_windows[c.name]}")
    return names


def _impute_from_history(
    prior: list[Optional[float]], col: ColumnSpec, fallback: float
) -> float:
    observed = [v for v in prior if v is not None]
    if not observed:
        return fallback
    if col.kind == "continuous":
        return float(np.median(observed))
    counts = Counter(observed)
    top = max(counts.values())
    return min(v for v, n in counts.items() if n == top)


def _rolling_mean(values: list[Optional[float]], window: int) -> Optional[float]:
    tail = [v for v in values[-window:] if v is not None]
    if not tail:
        return None
    return float(np.mean(tail))


def _assemble_row(
    schema: PanelSchema,
    config: FeatureConfig,
    fallbacks: Mapping[str, float],
    baseline: Sequence[Optional[float]],
    prior_sessions: Sequence[SessionRecord],
    current: Optional[SessionRecord],
    t: int,
) -> FeatureRow:
    values: list[float] = []
    indicators: list[float] = []

    for j, col in enumerate(schema.baseline_columns):
        v = baseline[j]
        if v is None:
            values.append(float(fallbacks[col.name]))
            indicators.append(1.0)
        else:
            values.append(float(v))
            indicators.append(0.0)

    for j, col in enumerate(schema.session_columns):
        v = current.covariates[j] if current is not None else None
        if v is None:
            prior = [s.covariates[j] for s in prior_sessions]
            values.append(
                _impute_from_history(prior, col, float(fallbacks[col.name]))
            )
            indicators.append(1.0)
        else:
            values.append(float(v))
            indicators.append(0.0)

    out_hist = [s.outcome for s in prior_sessions]
    mean = _rolling_mean(out_hist, config.outcome_window)
    values.append(0.0 if mean is None else mean)
    indicators.append(1.0 if mean is None else 0.0)
    for j, col in enumerate(schema.session_columns):
        if col.name not in config.covariate_windows:
            continue
        window = config.covariate_windows[col.name]
        hist = [s.covariates[j] for s in prior_sessions]
        mean = _rolling_mean(hist, window)
        values.append(0.0 if mean is None else mean)
        indicators.append(1.0 if mean is None else 0.0)

    if config.include_session_index:
        values.append(float(t))

    return FeatureRow(
        values=np.asarray(values, dtype=float),
        missing_indicators=np.asarray(indicators, dtype=float),
        session_index=t,
    )


def build_features(
    series: IndividualSeries,
    t: int,
    pool_fallbacks: Mapping[str, float],
    schema: PanelSchema,
    config: FeatureConfig = FeatureConfig(),
) -> FeatureRow:
    """Feature row for session ``t`` of one individual.

    Covariates observed at ``t`` pass through; missing ones are imputed by the
    median (continuous) or mode (binary/categorical) of that individual's
    sessions before ``t``, falling back to ``pool_fallbacks`` when no prior
    value exists. History summaries use sessions strictly before ``t``; rolling
    means over an empty window default to 0 with their indicator set.
    """
    if not 1 <= t <= series.n_sessions:
        raise ValueError(
            f"session {t} out of range 1..{series.n_sessions} "
            f"for individual {series.individual_id!r}"
        )
    return _assemble_row(
        schema,
        config,
        pool_fallbacks,
        series.baseline,
        series.sessions[: t - 1],
        series.sessions[t - 1],
        t,
    )


def build_next_features(
    series: IndividualSeries,
    pool_fallbacks: Mapping[str, float],
    schema: PanelSchema,
    config: FeatureConfig = FeatureConfig(),
) -> FeatureRow:
    """Feature row for the yet-unobserved session after the series' last.

    All current-session covariates are treated as missing (imputed from the
    individual's full history), so the row is a pure function of the past.
    """
    t = series.sessions[-1].session_index + 1
    return _assemble_row(
        schema, config, pool_fallbacks, series.baseline, series.sessions, None, t
    )


def stack_rows(rows: Sequence[FeatureRow]) -> np.ndarray:
    """Design matrix: values then missingness indicators, one row per query."""
    return np.asarray(
        [np.concatenate([r.values, r.missing_indicators]) for r in rows], dtype=float
    )


def pool_fallbacks(dataset: PanelDataset) -> dict[str, float]:
    """Cold-start imputation values per covariate column, from a whole pool.

    Continuous columns use the pooled median, binary/categorical the pooled
    mode (ties to the smallest code). Columns with no observed value at all
    fall back to 0.
    """
    out: dict[str, float] = {}
    for j, col in enumerate(dataset.schema.baseline_columns):
        vals = [
            ind.baseline[j] for ind in dataset.individuals if ind.baseline[j] is not None
        ]
        out[col.name] = _column_fallback(vals, col)
    for j, col in enumerate(dataset.schema.session_columns):
        vals = [
            s.covariates[j]
            for ind in dataset.individuals
            for s in ind.sessions
            if s.covariates[j] is not None
        ]
        out[col.name] = _column_fallback(vals, col)
    return out


def _column_fallback(vals: list[float], col: ColumnSpec) -> float:
    if not vals:
        return 0.0
    if col.kind == "continuous":
        return float(np.median(vals))
    counts = Counter(vals)
    top = max(counts.values())
    return float(min(v for v, n in counts.items() if n == top))


# ---------------------------------------------------------------------------
# splitting and filtering


def split_tuning_working(
    dataset: PanelDataset, fraction: float, seed: int
) -> tuple[PanelDataset, PanelDataset]:
    """Partition a panel by whole individuals, deterministically given a seed.

    ``fraction`` is the share of individuals assigned to the first (tuning)
    partition. Membership depends only on the sorted ids and the seed, never
    on dataset row order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    ids = sorted(ind.individual_id for ind in dataset.individuals)
    n = len(ids)
    n_tuning = int(round(fraction * n))
    if n_tuning == 0 or n_tuning == n:
        raise ValueError(
            f"fraction {fraction} would leave an empty partition ({n} individuals)"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    tuning_ids = {ids[i] for i in perm[:n_tuning]}
    tuning = tuple(i for i in dataset.individuals if i.individual_id in tuning_ids)
    working = tuple(i for i in dataset.individuals if i.individual_id not in tuning_ids)
    return (
        PanelDataset(tuning, dataset.schema),
        PanelDataset(working, dataset.schema),
    )


def series_prefix(series: IndividualSeries, upto: int) -> IndividualSeries:
    """Copy of a series keeping only sessions with position <= ``upto``."""
    if not 1 <= upto <= series.n_sessions:
        raise ValueError(f"prefix length {upto} out of range")
    return IndividualSeries(
        series.individual_id, series.baseline, series.sessions[:upto]
    )


def require_consecutive_sessions(series: IndividualSeries) -> None:
    """The online engine needs 1-based consecutive session positions."""
    for pos, rec in enumerate(series.sessions, start=1):
        if rec.session_index != pos:
            raise ValueError(
                f"individual {series.individual_id!r}: session indices must be "
                f"consecutive 1..T (found {rec.session_index} at position {pos})"
            )
