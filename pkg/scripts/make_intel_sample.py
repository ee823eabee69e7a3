"""Generate the synthetic Intel-Lab-style sample grid shipped with the package.

The real sensor log is not redistributed.  This script writes a stand-in with
the same gridded layout: 52 sensor indices (1..54 without 5 and 15) as rows,
time steps 301..400 as columns, temperatures in degrees Celsius peaking near
25.  The field is a smooth space-time pattern plus seeded noise and a few
spikes, so the pre-filter has outliers to remove.

Usage::

    python3 scripts/make_intel_sample.py [output.csv]
"""

import sys
from pathlib import Path

import numpy as np

from hkrls.datasets import save_grid_csv
from hkrls.hierarchic import GridDataset

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "hkrls" / "data" / "intel_lab_sample.csv"


def make_sample(seed: int = 20040228) -> GridDataset:
    rng = np.random.default_rng(seed)
    sensors = np.array([s for s in range(1, 55) if s not in (5, 15)], dtype=float)
    times = np.arange(301, 401, dtype=float)
    s, t = np.meshgrid(sensors, times, indexing="ij")
    field = (21.0
             + 1.6 * np.sin(2 * np.pi * s / 27.0 + 0.4)
             + 0.9 * np.cos(2 * np.pi * (t - 301) / 100.0) * np.cos(s / 9.0)
             + 0.02 * (t - 301))
    noisy = field + rng.normal(0.0, 0.15, size=field.shape)
    spikes = rng.choice(noisy.size, size=12, replace=False)
    noisy.flat[spikes] += rng.uniform(1.0, 2.0, size=spikes.size)
    noisy = np.minimum(np.round(noisy, 3), 25.0)
    return GridDataset((sensors, times), noisy)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else DEFAULT_OUT
    save_grid_csv(make_sample(), out, names=("sensor", "time"))
    print(out)


if __name__ == "__main__":
    main()
