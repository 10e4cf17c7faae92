"""From 15-minute meter readings to an equilibrium on historical days.

Writes a synthetic long-format meter file, integrates the afternoon peak
window per day, and solves the sharing game on the resulting matrix.
"""

# %%
import tempfile
from pathlib import Path

from storage_sharing import Tariff, nash_equilibrium
from storage_sharing.ingest import PeakWindow, build_model, daily_peak_energy, load_csv, synthetic_meter_frame

work = Path(tempfile.mkdtemp())
synthetic_meter_frame(6, days=365, mean_correlation=0.5, seed=8).to_csv(work / "meters.csv", index=False)

# %%
window = PeakWindow.parse("12:00-18:00", weekdays_only=True)
daily = [daily_peak_energy(s, window) for s in load_csv(work / "meters.csv")]
cohort = build_model(daily)
files = cohort.write(work / "cohort")
print(f"{len(cohort.dates)} weekdays, mean pairwise correlation {cohort.mean_pairwise_correlation():.3f}")
print("wrote", ", ".join(Path(f).name for f in files.values()))

# %% historical days are the sample; no resampling
tariff = Tariff(54.0, 21.5, 10.0)
sol = nash_equilibrium(tariff, cohort.model.as_samples(), verify=False)
for fid, c, j in zip(cohort.firm_ids, sol.allocation.capacities, sol.j_star):
    print(f"  {fid}: C* = {c:5.2f} kWh   J* = {j:6.1f} c/day")
