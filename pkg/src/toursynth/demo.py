"""Self-contained demo dataset builder.

Writes a synthetic region (23 wards), a POI catalog, survey marginals, a
GPS staypoint file with a plausible tourist cohort plus non-tourist noise,
and a ready-to-run pipeline config. Everything is a pure function of the
seed; the test suite reuses these fixtures.

Run ``python -m toursynth.demo --out demo_data`` and then
``toursynth -c demo_data/toursynth.toml pipeline``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

WARDS: list[tuple[str, float, float]] = [
    ("chiyoda", 35.694, 139.754),
    ("chuo", 35.671, 139.772),
    ("minato", 35.658, 139.752),
    ("shinjuku", 35.694, 139.703),
    ("bunkyo", 35.708, 139.752),
    ("taito", 35.713, 139.780),
    ("sumida", 35.711, 139.802),
    ("koto", 35.673, 139.817),
    ("shinagawa", 35.609, 139.730),
    ("meguro", 35.641, 139.698),
    ("ota", 35.561, 139.716),
    ("setagaya", 35.646, 139.653),
    ("shibuya", 35.664, 139.698),
    ("nakano", 35.707, 139.664),
    ("suginami", 35.700, 139.636),
    ("toshima", 35.726, 139.717),
    ("kita", 35.753, 139.734),
    ("arakawa", 35.736, 139.783),
    ("itabashi", 35.751, 139.709),
    ("nerima", 35.736, 139.652),
    ("adachi", 35.775, 139.805),
    ("katsushika", 35.743, 139.847),
    ("edogawa", 35.707, 139.868),
]

# id, name, category, lat, lon, radius_m, min_dwell_s
POIS: list[tuple[str, str, str, float, float, float, int]] = [
    ("p01", "Senso-ji Temple", "temple", 35.7148, 139.7967, 500, 1800),
    ("p02", "Shibuya Scramble Crossing", "urban_icon", 35.6595, 139.7005, 400, 1200),
    ("p03", "Meiji Shrine", "temple", 35.6764, 139.6993, 500, 1800),
    ("p04", "Tokyo Tower", "urban_icon", 35.6586, 139.7454, 400, 1200),
    ("p05", "Tokyo Skytree", "urban_icon", 35.7101, 139.8107, 500, 1200),
    ("p06", "Ueno Park Museums", "museum", 35.7156, 139.7745, 600, 1800),
    ("p07", "Akihabara Electric Town", "shopping", 35.6984, 139.7731, 400, 1200),
    ("p08", "Ginza Shopping District", "shopping", 35.6717, 139.7650, 500, 1200),
    ("p09", "Shinjuku Gyoen", "park", 35.6852, 139.7100, 500, 1800),
    ("p10", "Odaiba Seaside Park", "park", 35.6300, 139.7770, 800, 1800),
    ("p11", "Toyosu Market", "market", 35.6654, 139.7707, 400, 1200),
    ("p12", "Ikebukuro Sunshine City", "shopping", 35.7295, 139.7190, 500, 1200),
    ("p13", "Marunouchi Business District", "business_district", 35.6810, 139.7650, 700, 1800),
    ("p14", "Tokyo International Forum", "conference_center", 35.6767, 139.7632, 500, 1800),
    ("p15", "Tokyo Big Sight", "conference_center", 35.6298, 139.7947, 700, 1800),
    ("p16", "Haneda Airport Terminal 3", "airport", 35.5494, 139.7798, 1000, 1800),
]

_BUSINESS = {"business_district", "conference_center", "airport"}


def _marginals_dict() -> dict:
    ward_w = np.array([6, 5, 5, 5, 3, 5, 3, 3, 2, 2, 2, 2, 5, 1, 1, 3, 1, 1, 1, 1, 1, 1, 1], dtype=float)
    ward = {code: w for (code, _, _), w in zip(WARDS, ward_w / ward_w.sum())}
    return {
        "gender": {"female": 0.52, "male": 0.48},
        "age_band": {"18-24": 0.16, "25-34": 0.30, "35-49": 0.28, "50-64": 0.18, "65+": 0.08},
        "purpose": {
            "Sightseeing": 0.46,
            "Visiting relatives": 0.08,
            "Business": 0.22,
            "International conference": 0.05,
            "Expo/trade fair": 0.04,
            "Corporate conference": 0.05,
            "Incentive/Study abroad": 0.04,
            "Other": 0.06,
        },
        "companion": {"alone": 0.38, "couple": 0.26, "family": 0.18, "friends": 0.12, "colleagues": 0.06},
        "origin": {"domestic": 0.55, "international": 0.45},
        "nights": {"0": 0.08, "1": 0.18, "2": 0.24, "3": 0.20, "4": 0.12, "5": 0.08, "6": 0.05, "7": 0.03, "9": 0.01, "12": 0.01},
        "locations": {"1": 0.08, "2": 0.16, "3": 0.22, "4": 0.20, "5": 0.14, "6": 0.09, "7": 0.05, "8": 0.03, "10": 0.02, "12": 0.01},
        "expenditure": {"10000": 0.10, "30000": 0.22, "50000": 0.26, "80000": 0.20, "120000": 0.12, "200000": 0.07, "350000": 0.03},
        "ward": {k: round(v, 9) for k, v in ward.items()},
        "month_weights": {str(m): w for m, w in zip(range(1, 13), _season_weights())},
        "purpose_by_companion": {
            "colleagues": {
                "Sightseeing": 0.10,
                "Visiting relatives": 0.02,
                "Business": 0.40,
                "International conference": 0.14,
                "Expo/trade fair": 0.12,
                "Corporate conference": 0.14,
                "Incentive/Study abroad": 0.04,
                "Other": 0.04,
            }
        },
    }


def _season_weights() -> list[float]:
    w = [1.0 + 0.5 * math.cos(2.0 * math.pi * (m - 4) / 12.0) for m in range(1, 13)]
    total = sum(w)
    return [round(x / total, 9) for x in w]


def _poi_month_weight(poi_index: int, category: str, month: int, tourist: bool) -> float:
    if tourist and category in _BUSINESS:
        return 0.02
    peak = (poi_index * 3) % 12 + 1
    phase = 2.0 * math.pi * (month - peak) / 12.0
    return 1.0 + 1.5 * max(0.0, math.cos(phase))


def _epoch(month: int, day: int, hour: float) -> int:
    base = datetime(2024, month, day, tzinfo=timezone.utc)
    return int(base.timestamp() + hour * 3600)


def build_staypoints(rng: np.random.Generator, n_tourists: int, n_other: int):
    """Synthetic GPS staypoints: tourists visiting month-weighted POIs for a
    few consecutive days, plus commuters, sparse agents, and wanderers."""
    rows = []
    season = np.array(_season_weights())
    agent = 0

    for _ in range(n_tourists):
        aid = f"g{agent:05d}"
        agent += 1
        month = int(rng.choice(12, p=season)) + 1
        stay_days = int(rng.integers(3, 7))
        start_day = int(rng.integers(2, 20))
        weights = np.array([
            _poi_month_weight(i, cat, month, tourist=True)
            for i, (_, _, cat, _, _, _, _) in enumerate(POIS)
        ])
        weights /= weights.sum()
        for d in range(stay_days):
            picks = rng.choice(len(POIS), size=3, replace=False, p=weights)
            hour = 9.0
            for p in picks:
                _, _, _, lat, lon, _, _ = POIS[p]
                jitter = rng.normal(0.0, 0.0004, size=2)  # ~40 m
                dwell = int(rng.integers(1800, 5400))
                start = _epoch(month, start_day + d, hour + rng.uniform(0.0, 0.5))
                rows.append((aid, lat + jitter[0], lon + jitter[1], start, start + dwell))
                hour += 3.5

    for i in range(n_other):
        aid = f"g{agent:05d}"
        agent += 1
        kind = i % 3
        month = int(rng.integers(1, 13))
        if kind == 0:
            # long-stay commuter: business anchor every weekday, episode too long
            _, _, _, lat, lon, _, _ = POIS[12]
            for d in range(28):
                start = _epoch(month, 1, 9.0) + d * 86400
                jitter = rng.normal(0.0, 0.0004, size=2)
                rows.append((aid, lat + jitter[0], lon + jitter[1], start, start + 28800))
        elif kind == 1:
            # sparse agent: filtered by the distinct-location rule
            for d in range(3):
                start = _epoch(month, 5 + d, 12.0)
                rows.append((aid, 35.70 + 0.001 * d, 139.75, start, start + 3600))
        else:
            # wanderer: enough distinct spots but never near a POI
            for d in range(10):
                start = _epoch(month, 3 + d, 11.0)
                lat = 35.80 + float(rng.uniform(0.0, 0.05))
                lon = 139.55 + float(rng.uniform(0.0, 0.05))
                rows.append((aid, lat, lon, start, start + 2400))

    rows.sort(key=lambda r: (r[0], r[3]))
    return rows


_CONFIG_TEMPLATE = """\
# toursynth pipeline configuration (demo dataset)
seed = {seed}
output_dir = "{out_dir}"
n_agents = {n_agents}

[inputs]
staypoints = "{base}/staypoints.csv"
poi_catalog = "{base}/pois.csv"
marginals = "{base}/marginals.json"
centroids = "{base}/centroids.csv"

[stage0]
space_eps_m = 150.0
time_eps_s = 900
dwell_floor_s = 900        # global dwell floor (seconds)
blend_eta = 0.60           # survey/default threshold blend weight
min_distinct_locations = 8

[stage1]
alpha = 0.7                # classifier/bucket-prior blend weight
n_iter = 400

[stage2]
rho = 0.6                  # location-to-ward conversion ratio
u_min = 1
u_max = 8
gamma = 0.3                # monthly/pooled transition pooling weight
lambda_t = 1.0
lambda_d = 1.0
lambda_p = 0.5
lambda_n = 0.5
tau_km = 5.0               # distance decay constant (km)

[stage3]
backend = "fallback"       # "remote" requires endpoint + credential env var
model = "gpt-4o-mini"
temperature = 0.8
retry_cap = 3
attempt_budget = 3
"""


def build_demo_inputs(
    outdir: str,
    seed: int = 7,
    n_tourists: int = 144,
    n_other: int = 30,
    n_agents: int = 100,
) -> dict[str, str]:
    """Write all demo input files plus a pipeline config; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = {}

    path = os.path.join(outdir, "centroids.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code", "lat", "lon"])
        writer.writerows(WARDS)
    paths["centroids"] = path

    path = os.path.join(outdir, "pois.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "name", "category", "lat", "lon", "radius_m", "min_dwell_s"])
        writer.writerows(POIS)
    paths["pois"] = path

    path = os.path.join(outdir, "marginals.json")
    with open(path, "w") as fh:
        json.dump(_marginals_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["marginals"] = path

    path = os.path.join(outdir, "staypoints.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "lat", "lon", "start_epoch_s", "end_epoch_s"])
        for aid, lat, lon, start, end in build_staypoints(rng, n_tourists, n_other):
            writer.writerow([aid, f"{lat:.6f}", f"{lon:.6f}", start, end])
    paths["staypoints"] = path

    path = os.path.join(outdir, "toursynth.toml")
    with open(path, "w") as fh:
        fh.write(_CONFIG_TEMPLATE.format(
            seed=seed,
            out_dir=os.path.join(outdir, "out").replace("\\", "/"),
            base=outdir.replace("\\", "/"),
            n_agents=n_agents,
        ))
    paths["config"] = path
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="write the toursynth demo dataset")
    parser.add_argument("--out", default="demo_data")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--n-agents", type=int, default=100)
    args = parser.parse_args(argv)
    paths = build_demo_inputs(args.out, seed=args.seed, n_agents=args.n_agents)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
