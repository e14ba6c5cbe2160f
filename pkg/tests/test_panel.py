from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from mtpshift import panel
from mtpshift.core import AnalysisFrame, ShiftPolicy
from mtpshift.learners import BINARY, LearnerSpec
from mtpshift.panel import (
    LAGGED,
    DataError,
    PanelTable,
    Schema,
    SliceSpec,
    bin_weekly,
    build_lagged_confounder,
    build_outcome,
    diagnose_shift,
    filter_population,
    ingest,
    make_toy_panel,
    prepare_weekly,
    rank_covariates,
    run_grid,
    screen_covariates,
)

SCHEMA = Schema(county_id="fips", covariates=("income",), indices={"home": "home"}, cases_cumulative=False)
LOGISTIC = [LearnerSpec("mean", "mean", BINARY), LearnerSpec("glm", "glm", BINARY)]
LINEAR = [LearnerSpec("mean", "mean"), LearnerSpec("glm", "glm")]


def write_csv(tmp_path, rows, name="in.csv"):
    p = tmp_path / name
    pd.DataFrame(rows).to_csv(p, index=False)
    return p


def daily_rows(counties=("01001", "01003", "01005"), weeks=2, start=date(2020, 6, 1)):
    rows = []
    for i, c in enumerate(counties):
        for d in range(7 * weeks):
            rows.append({"fips": c, "date": (start + timedelta(days=d)).isoformat(), "population": 50_000 + i,
                         "cases": d % 3, "home": 0.2 + 0.01 * i, "income": 40 + i})
    return rows


def weekly_table(rows):
    df = pd.DataFrame(rows)
    df["week_start"] = pd.to_datetime(df["week_start"])
    return PanelTable(df, ("home",), (), "weekly")


# -- ingest


def test_ingest_and_bin_count(tmp_path):
    t = ingest(write_csv(tmp_path, daily_rows()), SCHEMA)
    assert len(t.data) == 42 and not t.report.rejected
    assert len(bin_weekly(t).data) == 6  # 3 counties x 2 weeks


def test_duplicate_key_named(tmp_path):
    rows = daily_rows()
    rows.append(dict(rows[5]))
    with pytest.raises(DataError, match="01001"):
        ingest(write_csv(tmp_path, rows), SCHEMA)


def test_negative_cases_rejected(tmp_path):
    rows = daily_rows()
    rows[3]["cases"] = -4
    t = ingest(write_csv(tmp_path, rows), SCHEMA)
    assert t.report.rejected == [(5, "negative case count")]
    assert len(t.data) == 41


def test_missing_column(tmp_path):
    rows = [{k: v for k, v in r.items() if k != "home"} for r in daily_rows()]
    with pytest.raises(DataError, match="home"):
        ingest(write_csv(tmp_path, rows), SCHEMA)


def test_sentinel_and_delimiter(tmp_path):
    rows = daily_rows(counties=("01001",), weeks=1)
    rows[2]["home"] = "-999"
    p = tmp_path / "in.tsv"
    pd.DataFrame(rows).to_csv(p, index=False, sep="\t")
    sch = Schema(county_id="fips", indices={"home": "home"}, cases_cumulative=False, delimiter="\t",
                 missing=("", "-999"))
    t = ingest(p, sch)
    assert t.data["home"].isna().sum() == 1


def test_cumulative_differencing_and_revisions(tmp_path):
    rows = daily_rows(counties=("01001",), weeks=1)
    for r, c in zip(rows, [10, 12, 15, 14, 20, 20, 26]):
        r["cases"] = c
    sch = Schema(county_id="fips", indices={"home": "home"}, cases_cumulative=True)
    t = ingest(write_csv(tmp_path, rows), sch)
    assert t.report.negative_revisions == 1
    np.testing.assert_array_equal(t.data["cases"].to_numpy()[1:], [2, 3, 0, 6, 0, 6])


def test_conservation_of_new_cases(tmp_path):
    raw = make_toy_panel(n_counties=3, n_weeks=3, seed=4)
    p = tmp_path / "toy.csv"
    raw.to_csv(p, index=False)
    sch = Schema(county_id="fips", indices={"single_tile": "single_tile"}, cases_cumulative=True)
    weekly = bin_weekly(ingest(p, sch))
    total = weekly.data.groupby("county_id")["cases_sum"].sum()
    span = raw.groupby("fips")["cases"].agg(lambda s: s.iloc[-1] - s.iloc[0])
    np.testing.assert_array_equal(total.to_numpy(), span.to_numpy())


def test_population_must_be_county_invariant(tmp_path):
    rows = daily_rows()
    rows[4]["population"] = 1
    with pytest.raises(DataError, match="population"):
        ingest(write_csv(tmp_path, rows), SCHEMA)


def test_row_order_irrelevant(tmp_path):
    rows = daily_rows()
    shuffled = [rows[i] for i in np.random.default_rng(0).permutation(len(rows))]
    a = bin_weekly(ingest(write_csv(tmp_path, rows, "a.csv"), SCHEMA)).data
    b = bin_weekly(ingest(write_csv(tmp_path, shuffled, "b.csv"), SCHEMA)).data
    pd.testing.assert_frame_equal(a, b)


# -- weekly binning


def binned(values, days=None):
    days = range(len(values)) if days is None else days
    start = date(2020, 6, 1)
    df = pd.DataFrame({"county_id": "x", "date": pd.to_datetime([start + timedelta(days=d) for d in days]),
                       "population": 1e5, "cases": 0.0, "home": values})
    return bin_weekly(PanelTable(df, ("home",), ())).data


def test_weekly_mean_examples():
    assert binned([10.0] * 7)["home"].iloc[0] == 10
    assert binned(list(range(1, 8)))["home"].iloc[0] == 4
    out = binned([0.0, 7.0], days=[0, 6])
    assert out["home"].iloc[0] == 3.5 and out["day_count"].iloc[0] == 2 and out["partial_week"].iloc[0]


def test_weeks_start_monday():
    out = binned([1.0] * 3, days=[5, 6, 7])  # Sat, Sun, Mon
    assert [d.weekday() for d in out["week_start"]] == [0, 0]
    assert list(out["day_count"]) == [2, 1]


# -- outcome and lag


def test_outcome_lead():
    t = weekly_table([
        {"county_id": "x", "week_start": "2020-06-01", "population": 100_000, "cases": 0.0, "home": 0.1},
        {"county_id": "x", "week_start": "2020-06-08", "population": 100_000, "cases": 0.0, "home": 0.1},
        {"county_id": "x", "week_start": "2020-06-15", "population": 100_000, "cases": 50.0, "home": 0.1},
        {"county_id": "y", "week_start": "2020-06-01", "population": 50_000, "cases": 25.0, "home": 0.1},
        {"county_id": "y", "week_start": "2020-06-15", "population": 50_000, "cases": 25.0, "home": 0.1},
    ])
    out = build_outcome(t, 2).data
    assert out["outcome"].iloc[0] == 50.0
    assert out["outcome"].iloc[3] == 50.0
    assert out["outcome"].iloc[1:3].isna().all() and np.isnan(out["outcome"].iloc[4])
    lag = build_lagged_confounder(t, "previous-week").data[LAGGED]
    assert np.isnan(lag.iloc[0]) and lag.iloc[1] == 0.0 and lag.iloc[2] == 0.0
    assert np.isnan(lag.iloc[4])  # y has no week of 2020-06-08
    cur = build_lagged_confounder(t, "current-week").data[LAGGED]
    assert cur.iloc[3] == 50.0
    with pytest.raises(ValueError):
        build_outcome(t, 0)


# -- population filter


def pop_table(pops):
    return PanelTable(pd.DataFrame({"county_id": [str(i) for i in range(len(pops))], "population": pops}), (), ())


def test_population_boundary():
    kept, s = filter_population(pop_table([39_999, 40_000, 1_000_000]), 40_000)
    assert s.kept == 2 and s.excluded == 1
    assert sorted(kept.data["population"]) == [40_000, 1_000_000]
    assert len(filter_population(pop_table([1, 2]), 0)[0].data) == 2


def test_population_filter_monotone():
    pops = np.random.default_rng(1).integers(1_000, 200_000, 50)
    kept = [filter_population(pop_table(pops), t)[1].kept for t in (0, 20_000, 40_000, 80_000, 300_000)]
    assert kept == sorted(kept, reverse=True)


# -- screening


def test_screen_exact_copy_first():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(200)
    df = pd.DataFrame({"a": a, "y": rng.standard_normal(200), "copy": a, "noise": rng.standard_normal(200)})
    assert rank_covariates(df, "a", "y", ["noise", "copy"])[0] == "copy"


def test_screen_ties_alphabetical():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(100)
    df = pd.DataFrame({"a": x + rng.standard_normal(100), "y": rng.standard_normal(100), "zeta": x, "beta": x})
    assert rank_covariates(df, "a", "y", ["zeta", "beta"]) == ["beta", "zeta"]


def test_screen_signal_beats_noise():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = 500
        signal = rng.standard_normal(n)
        df = pd.DataFrame({"a": signal + rng.standard_normal(n), "noise": rng.standard_normal(n), "signal": signal})
        # the outcome depends on the exposure, as leading case counts do
        df["y"] = df["a"] + rng.standard_normal(n)
        wins += rank_covariates(df, "a", "y", ["noise", "signal"])[-1] == "noise"
    assert wins >= 95


def test_screen_modes_and_warning():
    raw = make_toy_panel(n_counties=8, n_weeks=5, seed=1)
    daily = PanelTable(raw.rename(columns={"fips": "county_id"}).assign(date=lambda d: pd.to_datetime(d["date"])),
                       ("single_tile",), ("median_income", "density"))
    daily.data["cases"] = daily.data.groupby("county_id")["cases"].diff().fillna(0)
    weekly, _ = prepare_weekly(daily)
    with pytest.warns(UserWarning, match="fewer than"):
        pooled = screen_covariates(weekly, "single_tile", "pooled-top8")
    assert sorted(pooled) == ["density", "median_income"]
    with pytest.warns(UserWarning):
        top4 = screen_covariates(weekly, "single_tile", "per-week-top4", week=date(2020, 6, 8))
    assert len(top4) == 2
    with pytest.raises(ValueError):
        screen_covariates(weekly, "single_tile", "per-week-top8")


# -- shift diagnosis


def test_diagnose_identity_and_selection():
    rng = np.random.default_rng(4)
    A = rng.standard_normal(1000)
    fr = AnalysisFrame(np.zeros((1000, 0)), A, A)
    d = diagnose_shift(fr, [ShiftPolicy.identity(), ShiftPolicy.additive(0.3), ShiftPolicy.additive(4.0)], LOGISTIC)
    assert d.max_ratio[0] == 1.0
    assert d.selected == ShiftPolicy.additive(0.3) and d.qualified
    with pytest.warns(UserWarning, match="no candidate"):
        d = diagnose_shift(fr, [ShiftPolicy.additive(3.0), ShiftPolicy.additive(4.0)], LOGISTIC)
    assert d.selected == ShiftPolicy.additive(3.0) and not d.qualified


# -- grid


def toy_weekly(min_pop=40_000):
    raw = make_toy_panel(n_counties=10, n_weeks=6, seed=2)
    daily = PanelTable(raw.rename(columns={"fips": "county_id"}).assign(date=lambda d: pd.to_datetime(d["date"])),
                       ("single_tile", "retail"), ("median_income", "density", "median_age"))
    daily.data["cases"] = daily.data.groupby("county_id")["cases"].diff()
    return prepare_weekly(daily, 2, "previous-week", min_pop)[0]


@pytest.mark.filterwarnings("ignore:only 3 candidate covariates")
def test_grid_shapes_and_skips():
    weekly = toy_weekly()
    weeks = panel.analysis_weeks(weekly)
    assert len(weeks) == 6 - 2 - 1
    pol = ShiftPolicy.multiplicative(1.05, clamp_hi=1.0)
    slices = [SliceSpec(w, "single_tile", pol) for w in weeks]
    res = run_grid(weekly, slices, LINEAR, LOGISTIC, V=3, seed=1, min_n=5)
    df = res.to_frame()
    assert len(df) == 2 * len(weeks) and not res.skipped
    assert list(df.columns) == list(panel.RESULT_COLUMNS)
    # adjusted and unadjusted rows share n: identical (A, Y), only W differs
    assert (df.groupby("week_start")["n"].nunique() == 1).all()
    assert (df.loc[df.estimator == "unadjusted", "screened_covariates"] == "").all()
    skipped = run_grid(weekly, slices, LINEAR, LOGISTIC, V=3, seed=1, min_n=50)
    assert not skipped.rows and len(skipped.skipped) == len(weeks)
    assert "below minimum" in skipped.skipped[0][1]


def test_grid_cells_count():
    # one row per (week, index, policy) and estimator
    weeks = [date(2020, 6, 1) + timedelta(weeks=k) for k in range(24)]
    idx = [f"m{i}" for i in range(10)]
    keys = {SliceSpec(w, m, ShiftPolicy.additive(-5)).key for w in weeks for m in idx}
    assert len(keys) == 240


@pytest.mark.filterwarnings("ignore:only 3 candidate covariates")
def test_grid_deterministic(tmp_path):
    weekly = toy_weekly()
    slices = [SliceSpec(w, "retail", ShiftPolicy.additive(-5, clamp_lo=-100)) for w in panel.analysis_weeks(weekly)]
    paths = []
    for k in range(2):
        res = run_grid(weekly, slices, LINEAR, LOGISTIC, V=3, seed=5, min_n=5)
        p = tmp_path / f"r{k}.csv"
        panel.write_results(res, p, tmp_path / f"r{k}.json")
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
