import json

import numpy as np
import pandas as pd
import pytest

from storage_sharing.ingest import (
    CsvSchema,
    IngestError,
    PeakWindow,
    UnitMismatchError,
    build_model,
    daily_peak_energy,
    load_csv,
    read_matrix_csv,
    synthetic_cohort_model,
    synthetic_meter_frame,
    write_matrix_csv,
)
from storage_sharing.demand import sample


def _frame(days=3, kw=lambda t: 2.0, firm="a", interval=15, start="2024-06-03"):
    t = pd.date_range(start, periods=days * 24 * 60 // interval, freq=f"{interval}min")
    return pd.DataFrame({"timestamp": t, "firm_id": firm, "kw": [kw(x) for x in t]})


def _write(tmp_path, df, name="m.csv"):
    p = tmp_path / name
    df.to_csv(p, index=False)
    return p


def test_constant_load_energy(tmp_path):
    p = _write(tmp_path, _frame(days=3))
    (s,) = load_csv(p)
    assert s.interval_minutes == 15 and not s.gaps
    de = daily_peak_energy(s, PeakWindow.parse("12:00-18:00"))
    assert len(de.dates) == 3
    assert np.allclose(de.peak, 12.0)
    # first two days are complete; the last stops at 23:45
    assert np.allclose(de.offpeak[:2], 48.0 - 12.0)


def test_linear_ramp_is_integrated_exactly(tmp_path):
    # trapezoid rule is exact for piecewise-linear power
    df = _frame(days=1, kw=lambda t: t.hour + t.minute / 60)
    (s,) = load_csv(_write(tmp_path, df))
    de = daily_peak_energy(s, PeakWindow.parse("12:00-18:00"))
    assert de.peak[0] == pytest.approx((18**2 - 12**2) / 2, abs=1e-12)


def test_watts_are_converted(tmp_path):
    df = _frame(days=1, kw=lambda t: 2000.0)
    (s,) = load_csv(_write(tmp_path, df), CsvSchema(unit="W"))
    assert np.allclose(s.power, 2.0)


def test_unit_column_mismatch(tmp_path):
    df = _frame(days=1)
    df["unit"] = "kW"
    df.loc[7, "unit"] = "W"
    with pytest.raises(UnitMismatchError) as err:
        load_csv(_write(tmp_path, df), CsvSchema(unit_column="unit"))
    assert err.value.lines == [9]


def test_negative_reading_reports_line(tmp_path):
    df = _frame(days=1)
    df.loc[4, "kw"] = -1.0
    with pytest.raises(IngestError) as err:
        load_csv(_write(tmp_path, df))
    assert err.value.lines == [6]


def test_non_monotone_timestamps(tmp_path):
    df = _frame(days=1)
    df.loc[[10, 11], "timestamp"] = df.loc[[11, 10], "timestamp"].to_numpy()
    with pytest.raises(IngestError, match="strictly increasing"):
        load_csv(_write(tmp_path, df))


def test_uneven_spacing(tmp_path):
    df = _frame(days=1)
    df.loc[20, "timestamp"] = df.loc[20, "timestamp"] + pd.Timedelta(minutes=5)
    with pytest.raises(IngestError, match="uneven"):
        load_csv(_write(tmp_path, df))


def test_missing_column(tmp_path):
    with pytest.raises(IngestError, match="missing column"):
        load_csv(_write(tmp_path, _frame(days=1).drop(columns="kw")))


def test_gap_drops_only_affected_day(tmp_path):
    df = _frame(days=3)
    t = df["timestamp"]
    hole = (t >= "2024-06-04 13:00") & (t < "2024-06-04 14:00")
    (s,) = load_csv(_write(tmp_path, df[~hole]))
    assert len(s.gaps) == 1
    de = daily_peak_energy(s)
    assert [str(d) for d in de.dates] == ["2024-06-03", "2024-06-05"]
    assert de.dropped[0][1] == "gap inside peak window"


def test_weekdays_only(tmp_path):
    # 2024-06-07 is a Friday
    (s,) = load_csv(_write(tmp_path, _frame(days=4, start="2024-06-07")))
    de = daily_peak_energy(s, PeakWindow.parse("12:00-18:00", weekdays_only=True))
    assert [str(d) for d in de.dates] == ["2024-06-07", "2024-06-10"]


def test_window_off_grid(tmp_path):
    (s,) = load_csv(_write(tmp_path, _frame(days=1)))
    with pytest.raises(IngestError, match="grid"):
        daily_peak_energy(s, PeakWindow.parse("12:10-18:00"))


def test_bad_window():
    with pytest.raises(ValueError):
        PeakWindow.parse("18:00-12:00")


def test_cohort_round_trip(tmp_path):
    df = synthetic_meter_frame(4, days=60, mean_correlation=0.5, seed=1)
    p = _write(tmp_path, df)
    daily = [daily_peak_energy(s) for s in load_csv(p)]
    cohort = build_model(daily)
    assert cohort.model.values.shape == (60, 4)
    assert 0.2 < cohort.mean_pairwise_correlation() < 0.8
    files = cohort.write(tmp_path / "out")
    back = read_matrix_csv(files["matrix"])
    assert np.array_equal(back.values, cohort.model.values)
    assert back.firm_ids == cohort.firm_ids
    corr = json.loads(open(files["correlation"]).read())
    assert corr["schema_version"] == "1" and len(corr["pairwise"]) == 6


def test_too_few_common_days(tmp_path):
    (s,) = load_csv(_write(tmp_path, _frame(days=5)))
    with pytest.raises(IngestError, match="common"):
        build_model([daily_peak_energy(s)])


def test_matrix_csv_without_dates(tmp_path):
    from storage_sharing.demand import PairedEmpiricalModel

    m = PairedEmpiricalModel(np.array([[1.0, 2.0], [3.0, 4.0]]), ("x", "y"))
    write_matrix_csv(m, tmp_path / "m.csv")
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv").values, m.values)


def test_synthetic_cohort_correlation():
    model = synthetic_cohort_model(30, mean_correlation=0.5, seed=2)
    s = sample(model, 50_000, seed=2)
    r = np.corrcoef(s.values, rowvar=False)[np.triu_indices(30, 1)]
    assert r.mean() == pytest.approx(0.5, abs=0.05)


def test_energy_conservation(tmp_path):
    df = synthetic_meter_frame(1, days=5, seed=3)
    (s,) = load_csv(_write(tmp_path, df))
    de = daily_peak_energy(s)
    assert len(de.dates) == 5
    assert de.peak.sum() + de.offpeak.sum() == pytest.approx(s.total_energy(), rel=1e-12)


def test_marker_day_stays_on_its_row(tmp_path):
    df = synthetic_meter_frame(3, days=40, seed=5)
    t = df["timestamp"]
    marker = (t.dt.date.astype(str) == "2024-06-20") & (t.dt.hour.between(12, 17))
    df.loc[marker & (df["firm_id"] == "firm001"), "kw"] = 100.0
    # a gap in another firm removes a different day for everyone
    hole = (df["firm_id"] == "firm002") & (t.dt.date.astype(str) == "2024-06-10") & (t.dt.hour == 14)
    df = df[~hole]
    daily = [daily_peak_energy(s) for s in load_csv(_write(tmp_path, df))]
    cohort = build_model(daily)
    files = cohort.write(tmp_path / "out")
    back = read_matrix_csv(files["matrix"])
    dates = list(back.dates)
    assert "2024-06-10" not in dates and len(dates) == 39
    row = dates.index("2024-06-20")
    col = back.firm_ids.index("firm001")
    assert back.values[row, col] > 400
    assert np.all(np.delete(back.values[:, col], row) < 100)
