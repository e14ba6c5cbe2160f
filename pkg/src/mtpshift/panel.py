"""County panel ingestion, weekly preprocessing and the repeated
cross-sectional analysis grid (weeks x mobility indices x shift policies)."""

from __future__ import annotations

import csv
import json
import logging
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .core import AnalysisFrame, ShiftPolicy
from .density_ratio import PositivityError, estimate_density_ratio
from .learners import LearnerSpec
from .tmle import estimate_shift

log = logging.getLogger(__name__)

PER_100K = 1e5
DEFAULT_WINDOW = (date(2020, 6, 1), date(2020, 11, 14))
CONFOUNDER_MODES = ("pooled-top8", "per-week-top8", "per-week-top4")
LAG_MODES = ("previous-week", "current-week")
RESULT_COLUMNS = (
    "week_start", "index", "policy_kind", "policy_value", "estimator", "n", "psi_delta",
    "std_err", "ci_lo", "ci_hi", "max_density_ratio", "mean_density_ratio",
    "truncated_shift_count", "screened_covariates", "dropped_rows",
)
LAGGED = "lagged_case_rate"


class DataError(ValueError):
    """Input data violates the declared schema or panel invariants."""


@dataclass(frozen=True)
class Schema:
    county_id: str = "county_id"
    date: str = "date"
    population: str = "population"
    cases: str = "cases"
    cases_cumulative: bool = True
    covariates: tuple = ()
    indices: dict = field(default_factory=dict)  # index name -> column
    delimiter: str = ","
    missing: tuple = ("", "NA")
    date_format: str = "%Y-%m-%d"

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        d = dict(d)
        if "covariates" in d:
            d["covariates"] = tuple(d["covariates"])
        if "missing" in d:
            m = d["missing"]
            d["missing"] = tuple([m] if isinstance(m, str) else m)
        if isinstance(d.get("indices"), (list, tuple)):
            d["indices"] = {c: c for c in d["indices"]}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def required(self) -> list:
        return [self.county_id, self.date, self.population, self.cases, *self.covariates, *self.indices.values()]


@dataclass
class IngestReport:
    n_read: int = 0
    rejected: list = field(default_factory=list)  # (line, reason)
    negative_revisions: int = 0


@dataclass
class PanelTable:
    """Long-format county records; ``level`` is ``"daily"`` or ``"weekly"``.

    Columns: ``county_id``, ``date`` (daily) or ``week_start`` (weekly),
    ``population``, ``cases`` (new cases), one column per mobility index and
    one per covariate.
    """

    data: pd.DataFrame
    indices: tuple
    covariates: tuple
    level: str = "daily"
    report: Optional[IngestReport] = None

    def counties(self) -> np.ndarray:
        return np.unique(self.data["county_id"].to_numpy())


def ingest(path, schema: Schema) -> PanelTable:
    """Read and validate a county-day CSV.

    Rows with an unparseable or invalid required field are rejected and
    listed by line number; missing columns or duplicated (county, date)
    keys raise :class:`DataError`.
    """
    raw = pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False)
    missing_cols = [c for c in dict.fromkeys(schema.required) if c not in raw.columns]
    if missing_cols:
        raise DataError(f"missing required columns: {', '.join(missing_cols)}")
    rep = IngestReport(n_read=len(raw))
    lines = np.arange(len(raw)) + 2  # header is line 1
    na = set(schema.missing)

    def numeric(col):
        s = raw[col].str.strip()
        s = s.where(~s.isin(na), None)
        return pd.to_numeric(s, errors="coerce")

    cid = raw[schema.county_id].str.strip()
    dt = pd.to_datetime(raw[schema.date].str.strip(), format=schema.date_format, errors="coerce")
    pop = numeric(schema.population)
    cases = numeric(schema.cases)
    reasons = pd.Series("", index=raw.index)
    checks = [
        (cid.isin(na) | cid.isna(), "missing county_id"),
        (dt.isna(), "unparseable date"),
        (pop.isna(), "unparseable population"),
        (pop.notna() & (pop <= 0), "nonpositive population"),
        (cases.isna(), "unparseable case count"),
        (cases.notna() & (cases < 0), "negative case count"),
    ]
    for mask, why in checks:
        mask = mask.fillna(False).to_numpy()
        fresh = mask & (reasons.to_numpy() == "")
        reasons[fresh] = why
    bad = (reasons != "").to_numpy()
    rep.rejected = [(int(ln), r) for ln, r in zip(lines[bad], reasons[bad])]
    for ln, r in rep.rejected:
        log.warning("line %d rejected: %s", ln, r)

    df = pd.DataFrame({"county_id": cid, "date": dt, "population": pop, "raw_cases": cases})
    for name, col in schema.indices.items():
        df[name] = numeric(col)
    for col in schema.covariates:
        df[col] = numeric(col)
    df = df.loc[~bad]
    dup = df.duplicated(["county_id", "date"], keep=False)
    if dup.any():
        first = df.loc[dup].sort_values(["county_id", "date"]).iloc[0]
        raise DataError(
            f"duplicate key (county_id={first['county_id']}, date={first['date'].date()})"
        )
    df = df.sort_values(["county_id", "date"], kind="mergesort").reset_index(drop=True)
    for col in ("population", *schema.covariates):
        varying = df.groupby("county_id")[col].nunique(dropna=True) > 1
        if varying.any():
            raise DataError(f"{col} varies within county {varying[varying].index[0]}")
        df[col] = df.groupby("county_id")[col].transform("first")
    if schema.cases_cumulative:
        diff = df.groupby("county_id")["raw_cases"].diff()
        neg = diff < 0
        rep.negative_revisions = int(neg.sum())
        df["cases"] = diff.clip(lower=0)  # first day of each county has no increment
    else:
        df["cases"] = df["raw_cases"]
    df = df.drop(columns="raw_cases")
    return PanelTable(df, tuple(schema.indices), tuple(schema.covariates), "daily", rep)


def week_start(d) -> pd.Series:
    d = pd.to_datetime(d)
    return (d - pd.to_timedelta(d.dt.weekday, unit="D")).dt.normalize()


def bin_weekly(table: PanelTable) -> PanelTable:
    """Simple weekly means (Monday-start weeks) of mobility and daily new cases.

    ``day_count`` holds the number of daily records in the week and
    ``partial_week`` flags weeks with fewer than seven.
    """
    if table.level != "daily":
        raise ValueError("bin_weekly expects a daily table")
    df = table.data.copy()
    df["week_start"] = week_start(df["date"])
    value_cols = ["cases", *table.indices]
    g = df.groupby(["county_id", "week_start"], sort=True)
    out = g[value_cols].mean()
    out["cases_sum"] = g["cases"].sum(min_count=1)
    out["day_count"] = g.size()
    first = g[["population", *table.covariates]].first()
    out = out.join(first).reset_index()
    out["partial_week"] = out["day_count"] < 7
    cols = ["county_id", "week_start", "day_count", "partial_week", "population", "cases", "cases_sum",
            *table.indices, *table.covariates]
    return PanelTable(out[cols], table.indices, table.covariates, "weekly", table.report)


def _rate_at_offset(weekly: PanelTable, offset: int, case_column: str = "cases") -> pd.Series:
    """Per-row case rate of the same county in week ``t + offset`` (NaN if absent)."""
    df = weekly.data
    rate = PER_100K * df[case_column] / df["population"]
    src = pd.DataFrame({"county_id": df["county_id"], "week_start": df["week_start"] - pd.Timedelta(weeks=offset),
                        "v": rate.to_numpy()})
    key = df[["county_id", "week_start"]]
    return key.merge(src, on=["county_id", "week_start"], how="left")["v"].set_axis(df.index)


def build_outcome(weekly: PanelTable, lead_weeks: int = 2, case_column: str = "cases") -> PanelTable:
    """Attach ``outcome``: new cases per 100,000 residents in week ``t + lead_weeks``."""
    if lead_weeks < 1:
        raise ValueError("lead_weeks must be at least 1")
    df = weekly.data.copy()
    df["outcome"] = _rate_at_offset(weekly, lead_weeks, case_column)
    return PanelTable(df, weekly.indices, weekly.covariates, weekly.level, weekly.report)


def build_lagged_confounder(weekly: PanelTable, mode: str = "previous-week",
                            case_column: str = "cases") -> PanelTable:
    """Attach the case rate of week ``t - 1`` (or of week ``t``) as a covariate."""
    if mode not in LAG_MODES:
        raise ValueError(f"unknown lag mode {mode!r}")
    df = weekly.data.copy()
    df[LAGGED] = _rate_at_offset(weekly, -1 if mode == "previous-week" else 0, case_column)
    return PanelTable(df, weekly.indices, weekly.covariates, weekly.level, weekly.report)


@dataclass(frozen=True)
class FilterSummary:
    threshold: float
    kept: int
    excluded: int
    kept_population: float
    total_population: float

    @property
    def population_share(self) -> float:
        return self.kept_population / self.total_population if self.total_population else 0.0


def filter_population(table: PanelTable, threshold: float = 40_000):
    """Keep counties with population >= ``threshold``; returns ``(table, summary)``."""
    pops = table.data.groupby("county_id")["population"].first()
    keep = pops.index[pops >= threshold]
    df = table.data[table.data["county_id"].isin(keep)].reset_index(drop=True)
    summary = FilterSummary(float(threshold), int(len(keep)), int(len(pops) - len(keep)),
                            float(pops[pops >= threshold].sum()), float(pops.sum()))
    return PanelTable(df, table.indices, table.covariates, table.level, table.report), summary


def _abs_corr(x, y) -> float:
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3:
        return 0.0
    x, y = x[ok], y[ok]
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(abs(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy)))


def rank_covariates(data: pd.DataFrame, exposure: str, outcome: str, candidates: Sequence[str]) -> list:
    """Candidates ordered by ``min(rank |corr with exposure|, rank |corr with outcome|)``.

    Correlations are Pearson on pairwise complete cases; ties go to the
    alphabetically first name.
    """
    a = data[exposure].to_numpy(float)
    y = data[outcome].to_numpy(float)
    ca = {c: _abs_corr(data[c].to_numpy(float), a) for c in candidates}
    cy = {c: _abs_corr(data[c].to_numpy(float), y) for c in candidates}
    rank_a = {c: i for i, c in enumerate(sorted(candidates, key=lambda c: (-ca[c], c)))}
    rank_y = {c: i for i, c in enumerate(sorted(candidates, key=lambda c: (-cy[c], c)))}
    return sorted(candidates, key=lambda c: (min(rank_a[c], rank_y[c]), c))


def screen_covariates(weekly: PanelTable, index: str, mode: str = "pooled-top8",
                      week=None, window=DEFAULT_WINDOW) -> list:
    """Top 8 (or 4) covariates for one mobility index.

    Pooled mode stacks every week of the study window; per-week modes use
    only the rows of ``week``. Requires ``outcome`` to be built.
    """
    if mode not in CONFOUNDER_MODES:
        raise ValueError(f"unknown confounder mode {mode!r}")
    k = 4 if mode.endswith("top4") else 8
    df = weekly.data
    if "outcome" not in df:
        raise ValueError("build the outcome before screening")
    if mode == "pooled-top8":
        df = df[_in_window(df["week_start"], window)]
    else:
        if week is None:
            raise ValueError(f"{mode} screening needs a week")
        df = df[df["week_start"] == pd.Timestamp(week)]
    cands = list(weekly.covariates)
    if len(cands) < k:
        warnings.warn(f"only {len(cands)} candidate covariates, fewer than {k}; using all", stacklevel=2)
    return rank_covariates(df, index, "outcome", cands)[:k]


def _in_window(weeks: pd.Series, window) -> pd.Series:
    if window is None:
        return pd.Series(True, index=weeks.index)
    lo, hi = (pd.Timestamp(d) for d in window)
    return (weeks >= lo) & (weeks <= hi)


@dataclass(frozen=True)
class ShiftDiagnosis:
    policies: tuple
    max_ratio: tuple
    selected: ShiftPolicy
    qualified: bool
    threshold: float


def diagnose_shift(frame: AnalysisFrame, candidates: Sequence[ShiftPolicy], ratio_library, V: int = 5,
                   seed: int = 0, threshold: float = 10.0) -> ShiftDiagnosis:
    """Largest-ratio check per candidate; pick the most intense with max ratio below ``threshold``.

    ``candidates`` are ordered from least to most intense.
    """
    if not candidates:
        raise ValueError("no candidate policies")
    maxes = []
    for pol in candidates:
        try:
            est = estimate_density_ratio(frame, pol, ratio_library, V, seed)
            maxes.append(est.max_r)
        except PositivityError:
            maxes.append(float("inf"))
    ok = [i for i, m in enumerate(maxes) if m < threshold]
    if ok:
        return ShiftDiagnosis(tuple(candidates), tuple(maxes), candidates[ok[-1]], True, threshold)
    warnings.warn(f"no candidate shift keeps the density ratio below {threshold}; "
                  "returning the least intense", stacklevel=2)
    return ShiftDiagnosis(tuple(candidates), tuple(maxes), candidates[0], False, threshold)


@dataclass(frozen=True)
class SliceSpec:
    week: date
    index: str
    policy: ShiftPolicy
    lead_weeks: int = 2
    confounder_mode: str = "pooled-top8"
    lag_mode: str = "previous-week"

    def __post_init__(self):
        if self.lead_weeks < 1:
            raise ValueError("lead_weeks must be at least 1")
        if self.confounder_mode not in CONFOUNDER_MODES:
            raise ValueError(f"unknown confounder mode {self.confounder_mode!r}")
        if self.lag_mode not in LAG_MODES:
            raise ValueError(f"unknown lag mode {self.lag_mode!r}")

    @property
    def key(self) -> str:
        return f"{pd.Timestamp(self.week).date()}|{self.index}|{self.policy.kind}|{self.policy.value!r}"


def prepare_weekly(daily: PanelTable, lead_weeks: int = 2, lag_mode: str = "previous-week",
                   threshold: float = 40_000, case_column: str = "cases"):
    """Bin, filter by population, and attach outcome and lagged case rate."""
    filtered, summary = filter_population(daily, threshold)
    weekly = bin_weekly(filtered)
    weekly = build_outcome(weekly, lead_weeks, case_column)
    weekly = build_lagged_confounder(weekly, lag_mode, case_column)
    return weekly, summary


def analysis_weeks(weekly: PanelTable, window=DEFAULT_WINDOW) -> list:
    """Weeks in the window where at least one county has outcome and lagged cases."""
    df = weekly.data
    ok = df["outcome"].notna() & df[LAGGED].notna() & _in_window(df["week_start"], window)
    return sorted(pd.Timestamp(w).date() for w in df.loc[ok, "week_start"].unique())


@dataclass(frozen=True, eq=False)
class SliceData:
    frame: AnalysisFrame
    covariates: tuple
    dropped_rows: int


def slice_frame(weekly: PanelTable, spec: SliceSpec, covariates: Sequence[str]) -> Optional[SliceData]:
    """Complete-case analysis frame for one (week, index) slice."""
    df = weekly.data
    rows = df[df["week_start"] == pd.Timestamp(spec.week)]
    w_cols = [*covariates, LAGGED]
    need = [spec.index, "outcome", *w_cols]
    ok = rows[need].notna().all(axis=1) & np.isfinite(rows[need].to_numpy(float)).all(axis=1)
    kept = rows[ok]
    if len(kept) < 2:
        return None
    frame = AnalysisFrame(
        kept[w_cols].to_numpy(float),
        kept[spec.index].to_numpy(float),
        kept["outcome"].to_numpy(float),
        kept["county_id"].to_numpy(),
        tuple(w_cols),
    )
    return SliceData(frame, tuple(w_cols), int(len(rows) - len(kept)))


@dataclass
class GridResult:
    rows: list
    skipped: list  # (slice key, reason)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(RESULT_COLUMNS))


def _cell_seed(seed: int, key: str, estimator: str) -> int:
    return int(zlib.crc32(f"{seed}|{key}|{estimator}".encode()))


def _result_row(spec, estimator, est, covs, dropped):
    return {
        "week_start": str(pd.Timestamp(spec.week).date()),
        "index": spec.index,
        "policy_kind": spec.policy.kind,
        "policy_value": spec.policy.value,
        "estimator": estimator,
        "n": est.n,
        "psi_delta": est.psi_delta,
        "std_err": est.std_err,
        "ci_lo": est.ci_lo,
        "ci_hi": est.ci_hi,
        "max_density_ratio": est.max_density_ratio,
        "mean_density_ratio": est.mean_density_ratio,
        "truncated_shift_count": est.truncated_shift_count,
        "screened_covariates": ";".join(covs),
        "dropped_rows": dropped,
    }


def _run_cell(job):
    spec, sd, outcome_library, ratio_library, V, seed, truncation = job
    key = spec.key
    out = []
    for estimator, frame in (("adjusted", sd.frame), ("unadjusted", sd.frame.unadjusted())):
        est = estimate_shift(frame, spec.policy, outcome_library, ratio_library, V,
                             _cell_seed(seed, key, estimator), truncation=truncation)
        covs = sd.covariates if estimator == "adjusted" else ()
        out.append(_result_row(spec, estimator, est, covs, sd.dropped_rows))
    return out


def run_grid(
    weekly_by_design: dict,
    slices: Sequence[SliceSpec],
    outcome_library: Sequence[LearnerSpec],
    ratio_library: Sequence[LearnerSpec],
    V: int = 5,
    seed: int = 0,
    min_n: int = 50,
    truncation: Optional[float] = None,
    window=DEFAULT_WINDOW,
    jobs: int = 1,
) -> GridResult:
    """Adjusted and unadjusted estimates for every slice.

    ``weekly_by_design`` maps ``(lead_weeks, lag_mode)`` to a prepared weekly
    table (see :func:`prepare_weekly`), or is a single table used for all
    slices. Results come back in slice order whatever ``jobs`` is.
    """
    if isinstance(weekly_by_design, PanelTable):
        weekly_by_design = {None: weekly_by_design}
    pooled_cache: dict = {}
    jobs_list, skipped, order = [], [], []
    for spec in slices:
        weekly = weekly_by_design.get((spec.lead_weeks, spec.lag_mode), weekly_by_design.get(None))
        if weekly is None:
            raise KeyError(f"no prepared table for lead={spec.lead_weeks}, lag={spec.lag_mode}")
        if spec.confounder_mode == "pooled-top8":
            ck = (id(weekly), spec.index)
            if ck not in pooled_cache:
                pooled_cache[ck] = screen_covariates(weekly, spec.index, "pooled-top8", window=window)
            covs = pooled_cache[ck]
        else:
            covs = screen_covariates(weekly, spec.index, spec.confounder_mode, week=spec.week)
        sd = slice_frame(weekly, spec, covs)
        if sd is None or sd.frame.n < max(min_n, V):
            n_have = 0 if sd is None else sd.frame.n
            reason = f"n={n_have} below minimum {max(min_n, V)}"
            log.info("skip %s: %s", spec.key, reason)
            skipped.append((spec.key, reason))
            continue
        jobs_list.append((spec, sd, tuple(outcome_library), tuple(ratio_library), V, seed, truncation))
        order.append(spec.key)
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, jobs_list))
    else:
        results = []
        for i, job in enumerate(jobs_list):
            log.info("slice %d/%d %s", i + 1, len(jobs_list), job[0].key)
            results.append(_run_cell(job))
    rows = [r for cell in results for r in cell]
    return GridResult(rows, skipped)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(result: GridResult, csv_path=None, json_path=None) -> None:
    """Write the grid as CSV and JSON mirrors with :data:`RESULT_COLUMNS`."""
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
            wr.writeheader()
            for row in result.rows:
                wr.writerow({k: _fmt(row[k]) for k in RESULT_COLUMNS})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([{k: row[k] for k in RESULT_COLUMNS} for row in result.rows], fh, indent=2)
            fh.write("\n")


def make_toy_panel(n_counties: int = 12, n_weeks: int = 8, start: date = date(2020, 6, 1),
                   seed: int = 0) -> pd.DataFrame:
    """Small synthetic county-day panel with cumulative cases and two indices."""
    rng = np.random.default_rng(seed)
    days = [start + timedelta(days=d) for d in range(7 * n_weeks)]
    rows = []
    for c in range(n_counties):
        pop = int(rng.integers(45_000, 900_000))
        income = float(rng.normal(55, 10))
        density = float(rng.lognormal(5, 1))
        age = float(rng.normal(39, 4))
        base_home = float(np.clip(rng.normal(0.3, 0.05), 0.05, 0.9))
        base_retail = float(rng.normal(-15, 6))
        cum = 0
        for t, d in enumerate(days):
            home = float(np.clip(base_home + rng.normal(0, 0.02), 0, 1))
            retail = float(max(base_retail + rng.normal(0, 3), -100))
            lam = pop * 1e-4 * (1 + 2 * (1 - home)) * (1 + 0.01 * t)
            cum += int(rng.poisson(lam))
            rows.append({
                "fips": f"{10001 + c:05d}", "date": d.isoformat(), "population": pop, "cases": cum,
                "single_tile": round(home, 6), "retail": round(retail, 4),
                "median_income": round(income, 3), "density": round(density, 3), "median_age": round(age, 3),
            })
    return pd.DataFrame(rows)
