"""Regenerate the bundled hourly SO2 series for two winters.

Values are drawn around a diurnal profile and clipped so that no sample,
and hence no 3-hour mean, reaches 600 µg/m³.
"""

import csv
import sys
from datetime import datetime, timedelta

import numpy as np

OUT = sys.argv[1] if len(sys.argv) > 1 else "measurements.csv"
rng = np.random.default_rng(1997)

rows = []
for start, end in [(datetime(1995, 11, 1), datetime(1996, 4, 1)), (datetime(1996, 11, 1), datetime(1997, 4, 1))]:
    t = start
    while t < end:
        base = 45 + 25 * np.sin((t.hour - 8) / 24 * 2 * np.pi)
        v = max(2.0, rng.gamma(2.0, base / 2.0))
        if rng.random() < 0.01:  # occasional winter inversion peak
            v += rng.uniform(150, 300)
        v = min(round(v * 2) / 2, 580.0)
        rows.append((t.strftime("%Y-%m-%dT%H:%M:%SZ"), "VOELKLINGEN-CITY", "SULFUR-DIOXIDE", f"{v:.1f}", "MKG-M3"))
        t += timedelta(hours=1)

with open(OUT, "w", newline="", encoding="utf-8") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["timestamp", "station", "pollutant", "value", "unit"])
    w.writerows(rows)
print(f"{len(rows)} samples written to {OUT}")
