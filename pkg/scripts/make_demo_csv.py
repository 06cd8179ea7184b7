"""Regenerate the bundled 500-row demo CSV (longitude, latitude, value).

Sites are uniform over a box roughly covering New Mexico. The value is a
smooth trend in position plus a spatially correlated Matérn field plus a
small white-noise term, mimicking a throughput measurement.
"""
from pathlib import Path

import numpy as np

from spatialcp import MaternParams, RngSpec, sample_gp

LON = (-109.0, -103.0)
LAT = (31.4, 37.0)


def make(n: int = 500, seed: int = 2024) -> np.ndarray:
    rng = RngSpec(seed)
    u = rng.child("sites").generator().uniform(size=(n, 2))
    field = sample_gp(u, MaternParams(1.0, 0.15, 1.5), rng.child("field"))
    noise = rng.child("noise").generator().normal(size=n)
    value = 80 + 25 * np.sin(3 * u[:, 0]) * np.cos(2 * u[:, 1]) + 12 * field + 4 * noise
    lon = LON[0] + (LON[1] - LON[0]) * u[:, 0]
    lat = LAT[0] + (LAT[1] - LAT[0]) * u[:, 1]
    return np.column_stack([lon, lat, value])


def main(path=Path(__file__).resolve().parents[1] / "src" / "spatialcp" / "data" / "demo_signal.csv"):
    rows = make()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("longitude,latitude,value\n")
        for lon, lat, v in rows:
            fh.write(f"{lon:.6f},{lat:.6f},{v:.3f}\n")
    print(path)


if __name__ == "__main__":
    main()
