"""Threshold exceedances as runs of qualifying sliding windows.

Run with ``python3 demos/03_exceedance_windows.py``.
"""

# %%
import numpy as np
from datetime import date

from shallowgen.airquality import MeasurementSeries, Period, ThresholdSpec, exceedances, load_datasource
from shallowgen.pack import bundled_data_dir

t0 = np.datetime64("1997-01-01T00:00:00", "s")
hourly = lambda n: t0 + (np.arange(n) * 3600).astype("timedelta64[s]")  # noqa: E731
early_warning = ThresholdSpec("DE", "SMOGVERORDNUNG", "VORWARNSTUFE", "SULFUR-DIOXIDE", 600, "MKG-M3", 3)
always = Period.interval(date(1990, 1, 1), date(2030, 1, 1))

# %%
# Two separate three-hour episodes above 600 count as two events.
values = np.array([650.0] * 3 + [100.0] * 10 + [650.0] * 3)
s = MeasurementSeries("S", "SULFUR-DIOXIDE", hourly(values.size), values, "MKG-M3")
print(exceedances(s, early_warning, always))

# %%
# Window means are compared strictly; a mean exactly at the limit does not count.
s = MeasurementSeries("S", "SULFUR-DIOXIDE", hourly(3), np.array([599.1, 600.2, 600.7]), "MKG-M3")
print("float sum:", s.values.sum(), "->", exceedances(s, early_warning, always))

# %%
# A missing sample breaks every window that would span it.
times = np.concatenate([hourly(2), hourly(2) + np.timedelta64(3 * 3600, "s")])
s = MeasurementSeries("S", "SULFUR-DIOXIDE", times, np.full(4, 900.0), "MKG-M3")
print("cadence", s.cadence, "->", exceedances(s, early_warning, always))

# %%
# The bundled winters stay below the early-warning threshold.
ds = load_datasource(bundled_data_dir())
series = ds.series("VOELKLINGEN-CITY", "SULFUR-DIOXIDE")
for year in (1995, 1996):
    p = Period.season_of("winter", year)
    _, v = series.window(p)
    print(p.start, p.end, f"n={v.size} max={v.max():.1f}", exceedances(series, early_warning, p))
