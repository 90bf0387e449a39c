"""Stage 0: tourist cohort extraction and month-conditioned ward priors.

Raw pings are merged into staypoints, staypoints are matched against a POI
catalog, agents are classified as tourists by a conjunction of episode rules,
and the surviving cohort is aggregated into monthly visit/transition priors
using unique-agent counts only. No individual trace leaves this module.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .errors import InputError, ValidationError
from .geo import GeoPoint, WardId, WardRegistry, haversine
from .util import round_half_away

logger = logging.getLogger(__name__)

GLOBAL_DWELL_FLOOR_S = 900
MIN_DISTINCT_LOCATIONS = 8
THRESHOLD_BLEND_WEIGHT = 0.60

# Catalog categories treated as business anchors rather than sightseeing.
BUSINESS_ANCHOR_CATEGORIES = frozenset({"business_district", "conference_center", "airport"})


@dataclass(frozen=True)
class Ping:
    agent: str
    loc: GeoPoint
    t: int


@dataclass(frozen=True)
class Staypoint:
    """One merged dwell record of an anonymous agent.

    ``end == start`` is possible for a staypoint formed from a single ping;
    such records carry zero dwell and can never match a POI because of the
    global dwell floor.
    """

    agent: str
    loc: GeoPoint
    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ValidationError(f"staypoint end {self.end} before start {self.start}")

    @property
    def dwell(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PoiEntry:
    id: str
    name: str
    category: str
    loc: GeoPoint
    radius_m: float
    min_dwell_s: int

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValidationError(f"POI {self.id}: radius must be positive")
        if self.min_dwell_s < 0:
            raise ValidationError(f"POI {self.id}: min dwell must be non-negative")


@dataclass(frozen=True)
class AgentEpisodeStats:
    """Per-agent summary used by the tourist rule."""

    episode_days: int = 0
    max_consecutive_sightseeing: int = 0
    distinct_pois: int = 0
    sightseeing_days: int = 0
    sightseeing_hours: float = 0.0
    active_days: int = 0


@dataclass(frozen=True)
class TouristThresholds:
    """Bounds of the tourist rule plus the calibration blend weight."""

    e_min: int = 2
    e_max: int = 14
    c_min: int = 2
    u_min: int = 3
    s_min: int = 2
    h_min: float = 4.0
    q_max: int = 25
    blend_weight: float = THRESHOLD_BLEND_WEIGHT

    def __post_init__(self):
        if self.e_min > self.e_max:
            raise ValidationError("e_min must not exceed e_max")
        if min(self.e_min, self.c_min, self.u_min, self.s_min, self.h_min, self.q_max) < 0:
            raise ValidationError("thresholds must be non-negative")
        if not 0.0 <= self.blend_weight <= 1.0:
            raise ValidationError("blend weight must lie in [0, 1]")

    @classmethod
    def defaults(cls) -> "TouristThresholds":
        return cls()


def _day_of(epoch_s: int, tz_offset_s: int = 0) -> date:
    return datetime.fromtimestamp(epoch_s + tz_offset_s, tz=timezone.utc).date()


def _month_of(epoch_s: int, tz_offset_s: int = 0) -> int:
    return _day_of(epoch_s, tz_offset_s).month


def merge_pings(pings: list[Ping], space_eps: float, time_eps: int) -> list[Staypoint]:
    """Collapse chains of adjacent pings into staypoints.

    A ping extends the current cluster when it is within ``space_eps`` meters
    and ``time_eps`` seconds of the previous ping of the same agent. A merged
    staypoint sits at the mean coordinate of its pings and spans their first
    to last timestamp. Input must already be time-sorted within each agent;
    unsorted input is rejected rather than silently resorted.
    """
    per_agent: dict[str, list[Ping]] = defaultdict(list)
    for p in pings:
        seq = per_agent[p.agent]
        if seq and p.t < seq[-1].t:
            raise ValidationError(f"pings for agent {p.agent!r} are not time-sorted")
        seq.append(p)

    out: list[Staypoint] = []
    for agent, seq in per_agent.items():
        cluster: list[Ping] = []
        for p in seq:
            if cluster and (
                p.t - cluster[-1].t <= time_eps
                and haversine(cluster[-1].loc, p.loc) <= space_eps
            ):
                cluster.append(p)
            else:
                if cluster:
                    out.append(_cluster_to_staypoint(agent, cluster))
                cluster = [p]
        if cluster:
            out.append(_cluster_to_staypoint(agent, cluster))
    out.sort(key=lambda sp: (sp.start, sp.agent, sp.end))
    return out


def _cluster_to_staypoint(agent: str, cluster: list[Ping]) -> Staypoint:
    lat = sum(p.loc.lat for p in cluster) / len(cluster)
    lon = sum(p.loc.lon for p in cluster) / len(cluster)
    return Staypoint(agent=agent, loc=GeoPoint(lat, lon), start=cluster[0].t, end=cluster[-1].t)


def filter_sparse_agents(
    staypoints: list[Staypoint], min_distinct_locations: int = MIN_DISTINCT_LOCATIONS
) -> list[Staypoint]:
    """Drop agents with fewer than ``min_distinct_locations`` distinct spots.

    Locations are deduplicated at 5 decimal places (~1 m). The bound is
    inclusive: an agent with exactly the minimum count is kept.
    """
    locs: dict[str, set[tuple[float, float]]] = defaultdict(set)
    for sp in staypoints:
        locs[sp.agent].add((round(sp.loc.lat, 5), round(sp.loc.lon, 5)))
    keep = {a for a, ls in locs.items() if len(ls) >= min_distinct_locations}
    return [sp for sp in staypoints if sp.agent in keep]


def match_poi(
    sp: Staypoint, catalog: list[PoiEntry], delta0: int = GLOBAL_DWELL_FLOOR_S
) -> PoiEntry | None:
    """Return the nearest POI whose radius and dwell rule both hold, if any.

    A POI qualifies when the staypoint lies within its match radius and the
    dwell is at least max(POI dwell threshold, global floor). Distance ties
    are broken by catalog order.
    """
    if not catalog:
        raise ValidationError("POI catalog is empty")
    best: PoiEntry | None = None
    best_d = float("inf")
    for poi in catalog:
        if sp.dwell < max(poi.min_dwell_s, delta0):
            continue
        d = haversine(sp.loc, poi.loc)
        if d <= poi.radius_m and d < best_d:
            best, best_d = poi, d
    return best


def is_sightseeing_category(category: str, business_categories=BUSINESS_ANCHOR_CATEGORIES) -> bool:
    return category not in business_categories


def sightseeing_categories_from(catalog: list[PoiEntry]) -> set[str]:
    """Default sightseeing set: every catalog category except business anchors."""
    return {p.category for p in catalog if is_sightseeing_category(p.category)}


def compute_agent_stats(
    matched: list[tuple[Staypoint, PoiEntry | None]],
    sightseeing_categories: set[str],
    tz_offset_s: int = 0,
) -> AgentEpisodeStats:
    """Aggregate one agent's matched staypoints into episode statistics.

    Staypoints must be time-sorted. Each staypoint is attributed to the
    calendar day of its start time.
    """
    if not matched:
        return AgentEpisodeStats()
    for (a, _), (b, _) in zip(matched, matched[1:]):
        if b.start < a.start:
            raise ValidationError("staypoints must be time-sorted")

    days = [_day_of(sp.start, tz_offset_s) for sp, _ in matched]
    active = set(days)
    sight_days: set[date] = set()
    poi_ids: set[str] = set()
    sight_seconds = 0
    for (sp, poi), day in zip(matched, days):
        if poi is None:
            continue
        poi_ids.add(poi.id)
        if poi.category in sightseeing_categories:
            sight_days.add(day)
            sight_seconds += sp.dwell

    return AgentEpisodeStats(
        episode_days=(max(days) - min(days)).days + 1,
        max_consecutive_sightseeing=_longest_consecutive_run(sight_days),
        distinct_pois=len(poi_ids),
        sightseeing_days=len(sight_days),
        sightseeing_hours=sight_seconds / 3600.0,
        active_days=len(active),
    )


def _longest_consecutive_run(days: set[date]) -> int:
    best = 0
    for d in days:
        if d - timedelta(days=1) in days:
            continue
        run = 1
        while d + timedelta(days=run) in days:
            run += 1
        best = max(best, run)
    return best


def classify_tourist(stats: AgentEpisodeStats, th: TouristThresholds) -> bool:
    """Conjunction of episode-length, continuity, diversity, and dwell rules."""
    return (
        th.e_min <= stats.episode_days <= th.e_max
        and stats.max_consecutive_sightseeing >= th.c_min
        and stats.distinct_pois >= th.u_min
        and stats.sightseeing_days >= th.s_min
        and stats.sightseeing_hours >= th.h_min
        and stats.active_days <= th.q_max
    )


def discrete_quantile(dist: dict[int, float], p: float) -> int:
    """Smallest support value whose cumulative probability reaches ``p``."""
    if not dist:
        raise ValidationError("empty distribution")
    acc = 0.0
    values = sorted(dist)
    for v in values:
        acc += dist[v]
        if acc >= p - 1e-12:
            return v
    return values[-1]


def calibrate_thresholds(
    nights_dist: dict[int, float] | None,
    ward_count_dist: dict[int, float] | None,
    defaults: TouristThresholds | None = None,
    eta: float = THRESHOLD_BLEND_WEIGHT,
) -> TouristThresholds:
    """Blend survey-derived threshold candidates with hand-specified defaults.

    Survey candidates are robust quantiles: the episode bounds come from the
    p10/p90 of (nights stayed + 1), the POI-diversity minimum from the p25 of
    the visited-ward count. Each deployed threshold is
    round(eta * survey + (1 - eta) * default); thresholds with no survey
    marginal keep their default and emit a warning.
    """
    base = defaults if defaults is not None else TouristThresholds.defaults()
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"eta must lie in [0, 1], got {eta}")

    def blend(candidate: float, default: float) -> int:
        return round_half_away(eta * candidate + (1.0 - eta) * default)

    e_min, e_max = base.e_min, base.e_max
    if nights_dist:
        e_min = blend(discrete_quantile(nights_dist, 0.10) + 1, base.e_min)
        e_max = blend(discrete_quantile(nights_dist, 0.90) + 1, base.e_max)
    else:
        logger.warning("no nights marginal; episode bounds keep defaults (%d, %d)", e_min, e_max)

    u_min = base.u_min
    if ward_count_dist:
        u_min = blend(discrete_quantile(ward_count_dist, 0.25), base.u_min)
    else:
        logger.warning("no visited-ward marginal; POI diversity bound keeps default %d", u_min)

    return replace(base, e_min=e_min, e_max=e_max, u_min=u_min, blend_weight=eta)


def assign_wards(
    staypoints: list[Staypoint],
    centroids: list[tuple[WardId, GeoPoint]],
    polygons: dict[str, object] | None = None,
) -> list[tuple[Staypoint, WardId]]:
    """Label each staypoint with a ward.

    Default is nearest centroid; when shapely polygons keyed by ward code are
    supplied, containment wins and the centroid rule is the fallback.
    """
    by_code = {w.code: w for w, _ in centroids}
    out = []
    for sp in staypoints:
        ward = None
        if polygons:
            from shapely.geometry import Point  # optional dependency, containment mode only

            pt = Point(sp.loc.lon, sp.loc.lat)
            for code, poly in polygons.items():
                if poly.contains(pt):
                    ward = by_code[code]
                    break
        if ward is None:
            ward = min(centroids, key=lambda wc: haversine(sp.loc, wc[1]))[0]
        out.append((sp, ward))
    return out


@dataclass
class MonthlyPriors:
    """Aggregate visit and transition priors from unique-agent counts.

    ``visit[m]`` is a probability vector over wards for month m; months with
    no tourists are absent. ``transition[m]`` is row-stochastic on rows with
    support; zero-support rows are all-zero and flagged via the support
    counts rather than silently uniform.
    """

    ward_codes: list[str]
    visit: dict[int, np.ndarray] = field(default_factory=dict)
    transition: dict[int, np.ndarray] = field(default_factory=dict)
    pooled_visit: np.ndarray | None = None
    pooled_transition: np.ndarray | None = None
    visit_support: dict[int, np.ndarray] = field(default_factory=dict)
    transition_support: dict[int, np.ndarray] = field(default_factory=dict)
    pooled_visit_support: np.ndarray | None = None
    pooled_transition_support: np.ndarray | None = None

    @property
    def n_wards(self) -> int:
        return len(self.ward_codes)

    def transition_row_supported(self, month: int) -> np.ndarray:
        sup = self.transition_support.get(month)
        if sup is None:
            return np.zeros(self.n_wards, dtype=bool)
        return sup.sum(axis=1) > 0

    def to_json_dict(self) -> dict:
        def vec(v: np.ndarray) -> dict:
            return {c: float(v[i]) for i, c in enumerate(self.ward_codes) if v[i] != 0.0}

        def mat(m: np.ndarray) -> dict:
            out = {}
            for i, c in enumerate(self.ward_codes):
                row = vec(m[i])
                if row:
                    out[c] = row
            return out

        return {
            "wards": self.ward_codes,
            "visit": {str(m): vec(v) for m, v in sorted(self.visit.items())},
            "transition": {str(m): mat(t) for m, t in sorted(self.transition.items())},
            "pooled_visit": vec(self.pooled_visit),
            "pooled_transition": mat(self.pooled_transition),
            "support": {
                "visit": {str(m): vec(v) for m, v in sorted(self.visit_support.items())},
                "transition": {str(m): mat(t) for m, t in sorted(self.transition_support.items())},
                "pooled_visit": vec(self.pooled_visit_support),
                "pooled_transition": mat(self.pooled_transition_support),
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "MonthlyPriors":
        codes = list(data["wards"])
        index = {c: i for i, c in enumerate(codes)}
        n = len(codes)

        def vec(d: dict) -> np.ndarray:
            v = np.zeros(n)
            for c, x in d.items():
                v[index[c]] = x
            return v

        def mat(d: dict) -> np.ndarray:
            m = np.zeros((n, n))
            for c, row in d.items():
                for c2, x in row.items():
                    m[index[c], index[c2]] = x
            return m

        sup = data["support"]
        return cls(
            ward_codes=codes,
            visit={int(m): vec(v) for m, v in data["visit"].items()},
            transition={int(m): mat(t) for m, t in data["transition"].items()},
            pooled_visit=vec(data["pooled_visit"]),
            pooled_transition=mat(data["pooled_transition"]),
            visit_support={int(m): vec(v) for m, v in sup["visit"].items()},
            transition_support={int(m): mat(t) for m, t in sup["transition"].items()},
            pooled_visit_support=vec(sup["pooled_visit"]),
            pooled_transition_support=mat(sup["pooled_transition"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "MonthlyPriors":
        try:
            with open(path) as fh:
                return cls.from_json_dict(json.load(fh))
        except OSError as exc:
            raise InputError(f"cannot read priors file {path}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise InputError(f"priors file {path} is malformed: {exc}") from exc


def build_monthly_priors(
    assigned: list[tuple[Staypoint, WardId]],
    wards: WardRegistry,
    tz_offset_s: int = 0,
) -> MonthlyPriors:
    """Count unique agents per ward visit and same-day ward pair, by month.

    Visit counts: agents with at least one staypoint in ward w during month
    m. Transition counts: agents with a consecutive same-day staypoint pair
    w -> w' (w != w'). Pooled variants count each agent once over the whole
    observation period. Duplicated staypoints cannot inflate any count.
    """
    n = len(wards)
    visit_agents: dict[int, dict[int, set[str]]] = defaultdict(lambda: defaultdict(set))
    trans_agents: dict[int, dict[tuple[int, int], set[str]]] = defaultdict(lambda: defaultdict(set))
    pooled_visit_agents: dict[int, set[str]] = defaultdict(set)
    pooled_trans_agents: dict[tuple[int, int], set[str]] = defaultdict(set)

    per_agent: dict[str, list[tuple[Staypoint, WardId]]] = defaultdict(list)
    for sp, w in assigned:
        per_agent[sp.agent].append((sp, w))

    for agent, seq in per_agent.items():
        seq.sort(key=lambda item: (item[0].start, item[0].end))
        for sp, w in seq:
            m = _month_of(sp.start, tz_offset_s)
            visit_agents[m][w.index].add(agent)
            pooled_visit_agents[w.index].add(agent)
        for (sp_a, w_a), (sp_b, w_b) in zip(seq, seq[1:]):
            if w_a.index == w_b.index:
                continue
            if _day_of(sp_a.start, tz_offset_s) != _day_of(sp_b.start, tz_offset_s):
                continue
            m = _month_of(sp_a.start, tz_offset_s)
            trans_agents[m][(w_a.index, w_b.index)].add(agent)
            pooled_trans_agents[(w_a.index, w_b.index)].add(agent)

    priors = MonthlyPriors(ward_codes=wards.codes)
    for m, ward_sets in visit_agents.items():
        counts = np.zeros(n)
        for w, agents in ward_sets.items():
            counts[w] = len(agents)
        priors.visit_support[m] = counts
        priors.visit[m] = counts / counts.sum()
    for m, pair_sets in trans_agents.items():
        counts = np.zeros((n, n))
        for (a, b), agents in pair_sets.items():
            counts[a, b] = len(agents)
        priors.transition_support[m] = counts
        priors.transition[m] = _normalize_rows(counts)

    pooled_v = np.zeros(n)
    for w, agents in pooled_visit_agents.items():
        pooled_v[w] = len(agents)
    priors.pooled_visit_support = pooled_v
    priors.pooled_visit = pooled_v / pooled_v.sum() if pooled_v.sum() > 0 else pooled_v.copy()

    pooled_t = np.zeros((n, n))
    for (a, b), agents in pooled_trans_agents.items():
        pooled_t[a, b] = len(agents)
    priors.pooled_transition_support = pooled_t
    priors.pooled_transition = _normalize_rows(pooled_t)
    return priors


def _normalize_rows(counts: np.ndarray) -> np.ndarray:
    out = np.zeros_like(counts, dtype=float)
    sums = counts.sum(axis=1)
    mask = sums > 0
    out[mask] = counts[mask] / sums[mask, None]
    return out


# ---------------------------------------------------------------------------
# File interfaces


def load_staypoints(path: str) -> list[Staypoint]:
    """Read ``agent_id,lat,lon,start_epoch_s,end_epoch_s`` records."""
    expected = ["agent_id", "lat", "lon", "start_epoch_s", "end_epoch_s"]
    rows = _read_csv(path, expected)
    out = []
    for lineno, row in rows:
        try:
            out.append(
                Staypoint(
                    agent=row["agent_id"],
                    loc=GeoPoint(float(row["lat"]), float(row["lon"])),
                    start=int(row["start_epoch_s"]),
                    end=int(row["end_epoch_s"]),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise InputError(f"{path}:{lineno}: bad staypoint: {exc}") from exc
    return out


def load_pings(path: str) -> list[Ping]:
    """Read ``agent_id,lat,lon,epoch_s`` ping records."""
    rows = _read_csv(path, ["agent_id", "lat", "lon", "epoch_s"])
    out = []
    for lineno, row in rows:
        try:
            out.append(
                Ping(
                    agent=row["agent_id"],
                    loc=GeoPoint(float(row["lat"]), float(row["lon"])),
                    t=int(row["epoch_s"]),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise InputError(f"{path}:{lineno}: bad ping: {exc}") from exc
    return out


def load_poi_catalog(path: str) -> list[PoiEntry]:
    """Read ``id,name,category,lat,lon,radius_m,min_dwell_s`` catalog rows."""
    rows = _read_csv(path, ["id", "name", "category", "lat", "lon", "radius_m", "min_dwell_s"])
    out = []
    for lineno, row in rows:
        try:
            out.append(
                PoiEntry(
                    id=row["id"],
                    name=row["name"],
                    category=row["category"],
                    loc=GeoPoint(float(row["lat"]), float(row["lon"])),
                    radius_m=float(row["radius_m"]),
                    min_dwell_s=int(row["min_dwell_s"]),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise InputError(f"{path}:{lineno}: bad POI row: {exc}") from exc
    if not out:
        raise InputError(f"{path}: POI catalog is empty")
    return out


def _read_csv(path: str, expected_fields: list[str]) -> list[tuple[int, dict]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected_fields:
                raise InputError(
                    f"{path}: expected header {','.join(expected_fields)!r}, "
                    f"got {reader.fieldnames}"
                )
            return [(lineno, row) for lineno, row in enumerate(reader, start=2)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
