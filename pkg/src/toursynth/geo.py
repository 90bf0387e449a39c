"""Ward identifiers, great-circle distance, and the inter-ward distance matrix.

Everything here is immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-84 coordinate pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class WardId:
    """A ward: compact integer index plus its opaque string code."""

    index: int
    code: str

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"ward index must be non-negative, got {self.index}")


class WardRegistry:
    """Ordered collection of wards with code lookup."""

    def __init__(self, codes: list[str]):
        if len(set(codes)) != len(codes):
            dupes = sorted({c for c in codes if codes.count(c) > 1})
            raise ValidationError(f"duplicate ward codes: {dupes}")
        self._wards = tuple(WardId(i, c) for i, c in enumerate(codes))
        self._by_code = {c: w for w, c in zip(self._wards, codes)}

    def __len__(self) -> int:
        return len(self._wards)

    def __iter__(self):
        return iter(self._wards)

    def __getitem__(self, index: int) -> WardId:
        return self._wards[index]

    def get(self, code: str) -> WardId | None:
        return self._by_code.get(code)

    def by_code(self, code: str) -> WardId:
        ward = self._by_code.get(code)
        if ward is None:
            raise ValidationError(f"unknown ward code {code!r}")
        return ward

    @property
    def codes(self) -> list[str]:
        return [w.code for w in self._wards]


def haversine_degrees(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine on raw degree values; periodic in longitude by construction."""
    p1, l1, p2, l2 = map(math.radians, (lat1, lon1, lat2, lon2))
    h = math.sin((p2 - p1) / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin((l2 - l1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6 371 000 m."""
    return haversine_degrees(a.lat, a.lon, b.lat, b.lon)


class DistanceMatrix:
    """Symmetric inter-ward distance matrix in kilometers with a zero diagonal.

    Only the upper triangle is stored authoritatively at build time; the
    lower triangle is mirrored, so symmetry is exact by construction.
    """

    def __init__(self, wards: WardRegistry, km: np.ndarray, *, check_triangle: bool = False):
        km = np.asarray(km, dtype=float)
        n = len(wards)
        if km.shape != (n, n):
            raise ValidationError(f"distance matrix shape {km.shape} does not match {n} wards")
        if np.any(np.diag(km) != 0.0):
            raise ValidationError("distance matrix diagonal must be exactly zero")
        if np.any(km < 0.0):
            raise ValidationError("distances must be non-negative")
        if not np.array_equal(km, km.T):
            raise ValidationError("distance matrix must be symmetric")
        if check_triangle:
            _check_triangle_inequality(km)
        self.wards = wards
        self._km = km
        self._km.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.wards)

    @property
    def km(self) -> np.ndarray:
        return self._km

    def between(self, a: WardId, b: WardId) -> float:
        return float(self._km[a.index, b.index])


def _check_triangle_inequality(km: np.ndarray, tol: float = 1e-6) -> None:
    n = km.shape[0]
    for k in range(n):
        # d[i,j] <= d[i,k] + d[k,j] for all i, j
        slack = km[:, k][:, None] + km[k, :][None, :] - km
        if slack.min() < -tol:
            i, j = np.unravel_index(np.argmin(slack), slack.shape)
            raise ValidationError(
                f"triangle inequality violated for wards ({i}, {k}, {j}) by {-slack.min():.3g} km"
            )


def build_distance_matrix(centroids: list[tuple[WardId, GeoPoint]]) -> DistanceMatrix:
    """Build a kilometer matrix from one centroid per ward.

    Rejects duplicate or missing wards: the ward set must be exactly the
    indices 0..n-1.
    """
    if not centroids:
        raise ValidationError("no centroids supplied")
    seen: dict[int, str] = {}
    for ward, _ in centroids:
        if ward.index in seen:
            raise ValidationError(f"duplicate centroid for ward {ward.code!r}")
        seen[ward.index] = ward.code
    n = len(centroids)
    missing = sorted(set(range(n)) - set(seen))
    if missing:
        raise ValidationError(f"missing centroid for ward indices {missing}")

    ordered = sorted(centroids, key=lambda wc: wc[0].index)
    wards = WardRegistry([w.code for w, _ in ordered])
    points = [p for _, p in ordered]
    km = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine(points[i], points[j]) / 1000.0
            km[i, j] = d
            km[j, i] = d
    return DistanceMatrix(wards, km, check_triangle=True)


def load_centroids(path: str) -> list[tuple[WardId, GeoPoint]]:
    """Read a ``code,lat,lon`` centroid CSV; ward indices follow file order."""
    out: list[tuple[WardId, GeoPoint]] = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip().lower() for c in header[:3]] != ["code", "lat", "lon"]:
                raise InputError(f"{path}: expected header 'code,lat,lon'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    code, lat, lon = row[0], float(row[1]), float(row[2])
                except (IndexError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: bad centroid row: {exc}") from exc
                out.append((WardId(len(out), code), GeoPoint(lat, lon)))
    except OSError as exc:
        raise InputError(f"cannot read centroid file {path}: {exc}") from exc
    if not out:
        raise InputError(f"{path}: no centroids found")
    return out


def load_distance_matrix(path: str) -> DistanceMatrix:
    """Read a kilometer matrix CSV: header ``ward,<code>,...``, one row per ward.

    Loaded matrices (e.g. official road distances) are only checked for
    symmetry and a zero diagonal, not the triangle inequality.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[0].strip().lower() != "ward":
                raise InputError(f"{path}: expected header starting with 'ward'")
            codes = [c.strip() for c in header[1:]]
            wards = WardRegistry(codes)
            km = np.zeros((len(codes), len(codes)))
            rows_seen = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                code = row[0].strip()
                ward = wards.by_code(code)
                values = row[1:]
                if len(values) != len(codes):
                    raise InputError(
                        f"{path}:{lineno}: expected {len(codes)} values, got {len(values)}"
                    )
                km[ward.index] = [float(v) for v in values]
                rows_seen.append(code)
    except OSError as exc:
        raise InputError(f"cannot read distance matrix {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: bad distance value: {exc}") from exc
    if len(rows_seen) != len(codes):
        missing = sorted(set(codes) - set(rows_seen))
        raise InputError(f"{path}: missing rows for wards {missing}")
    return DistanceMatrix(wards, km)
