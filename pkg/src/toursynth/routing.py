"""Stage 2: quota-calibrated, distance-feasible ward sequences.

Location counts become ward budgets, integer ward quotas are apportioned
against the survey ward marginal (largest remainder, so aggregate shares
match by construction), ward sets are drawn against the monthly visit prior,
and each set is ordered greedily by a composite transition/distance/share/
novelty score before being split across days.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .cohort import MonthlyPriors
from .errors import InputError, ValidationError
from .geo import DistanceMatrix, WardId, WardRegistry
from .population import AgentProfile
from .scope import TripScope
from .util import round_half_away

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoutingParams:
    """Stage-2 knobs; every value is config-surfaced."""

    rho: float = 0.6          # location-to-ward conversion ratio
    u_min: int = 1            # ward budget lower bound
    u_max: int = 8            # ward budget upper bound
    gamma: float = 0.3        # pooled-transition blending weight
    lambda_t: float = 1.0     # transition-prior weight
    lambda_d: float = 1.0     # distance-decay weight
    lambda_p: float = 0.5     # survey-share weight
    lambda_n: float = 0.5     # novelty weight
    tau_km: float = 5.0       # distance decay constant

    def __post_init__(self):
        if self.u_min < 1 or self.u_min > self.u_max:
            raise ValidationError("require 1 <= u_min <= u_max")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if min(self.lambda_t, self.lambda_d, self.lambda_p, self.lambda_n) < 0:
            raise ValidationError("score weights must be non-negative")
        if self.tau_km <= 0:
            raise ValidationError("tau must be positive")


@dataclass
class WardItinerary:
    """Ordered per-day ward assignments for one agent."""

    agent_id: str
    month: int
    days: list[list[WardId]]

    def __post_init__(self):
        if not self.days or any(not day for day in self.days):
            raise ValidationError(f"{self.agent_id}: every itinerary day must be non-empty")
        if not 1 <= self.month <= 12:
            raise ValidationError(f"{self.agent_id}: month {self.month} outside 1..12")

    @property
    def ward_set(self) -> set[WardId]:
        return {w for day in self.days for w in day}

    def day_codes(self) -> list[list[str]]:
        return [[w.code for w in day] for day in self.days]


def ward_budget(p_locs: int, params: RoutingParams) -> int:
    """Convert a predicted location count into a distinct-ward budget."""
    if p_locs < 1:
        raise ValidationError(f"location count must be >= 1, got {p_locs}")
    return int(np.clip(round_half_away(params.rho * p_locs), params.u_min, params.u_max))


def allocate_quotas(pi: np.ndarray, total_slots: int) -> np.ndarray:
    """Largest-remainder apportionment of ``total_slots`` to the ward shares.

    Quotas sum exactly to the slot total; |quota_w - pi_w * total| < 1 for
    every ward. Remainder ties go to the larger share, then the lower index.
    """
    pi = np.asarray(pi, dtype=float)
    if abs(pi.sum() - 1.0) > 1e-9:
        raise ValidationError(f"ward marginal sums to {pi.sum():.12f}, expected 1")
    if total_slots < 0:
        raise ValidationError("total slots must be non-negative")
    exact = pi * total_slots
    quotas = np.floor(exact).astype(int)
    remainders = exact - quotas
    leftover = total_slots - int(quotas.sum())
    order = sorted(range(len(pi)), key=lambda w: (-remainders[w], -pi[w], w))
    for w in order[:leftover]:
        quotas[w] += 1
    return quotas


def assign_ward_sets(
    agents: list[tuple[str, int, int]],
    quotas: np.ndarray,
    visit_priors: dict[int, np.ndarray],
    pooled_visit: np.ndarray,
    rng: np.random.Generator,
    max_retries: int = 20,
) -> dict[str, list[int]]:
    """Give each agent a set of distinct wards while consuming quotas exactly.

    ``agents`` carries (agent_id, travel month, ward budget). Candidate wards
    are weighted by remaining quota times the month visit prior (pooled prior
    when the month is absent). Infeasible draws are retried with a
    re-randomized agent order up to ``max_retries`` before failing.
    """
    total_budget = sum(u for _, _, u in agents)
    if total_budget != int(quotas.sum()):
        raise ValidationError(
            f"budget total {total_budget} does not match quota total {int(quotas.sum())}"
        )
    n = len(quotas)
    priors = {m: np.asarray(v, dtype=float) for m, v in visit_priors.items()}
    pooled = np.asarray(pooled_visit, dtype=float)

    for attempt in range(max_retries):
        order = rng.permutation(len(agents))
        result = _try_assign(agents, order, quotas.astype(int).copy(), priors, pooled, n, rng)
        if result is not None:
            return result
        logger.debug("ward-set assignment attempt %d infeasible; reshuffling", attempt + 1)
    raise ValidationError(f"ward-set assignment infeasible after {max_retries} retries")


def _try_assign(agents, order, remaining, priors, pooled, n, rng):
    result: dict[str, list[int]] = {}
    for pos, idx in enumerate(order):
        agent_id, month, budget = agents[idx]
        prior = priors.get(month, pooled)
        agents_left = len(order) - pos
        # Capacity guard: each agent absorbs a ward at most once, so a ward
        # whose remaining quota equals the agents left is mandatory for all
        # of them; a larger remainder is already infeasible on this order.
        if np.any(remaining > agents_left):
            return None
        mandatory = np.flatnonzero(remaining == agents_left)
        if len(mandatory) > budget:
            return None
        chosen: list[int] = [int(w) for w in mandatory]
        remaining[mandatory] -= 1
        while len(chosen) < budget:
            candidates = np.flatnonzero(remaining > 0)
            candidates = candidates[~np.isin(candidates, chosen)]
            needs = budget - len(chosen)
            if len(candidates) < needs:
                return None
            if len(candidates) == needs:
                # Forced: every remaining candidate must be taken once.
                for w in candidates:
                    chosen.append(int(w))
                    remaining[w] -= 1
                break
            weights = remaining[candidates] * prior[candidates]
            if weights.sum() <= 0:
                weights = remaining[candidates].astype(float)
            w = int(rng.choice(candidates, p=weights / weights.sum()))
            chosen.append(w)
            remaining[w] -= 1
        result[agent_id] = chosen
    return result


def blend_transition(
    gps: np.ndarray | None,
    pooled: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Blend the month-conditioned transition prior with the pooled fallback.

    Rows without monthly support use the pooled row alone; rows unsupported
    in both become uniform with a warning. Support is read off the row sums.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    pooled = np.asarray(pooled, dtype=float)
    n = pooled.shape[0]
    if pooled.shape != (n, n):
        raise ValidationError("pooled transition matrix must be square")
    if gps is None:
        gps = np.zeros((n, n))
    gps = np.asarray(gps, dtype=float)
    if gps.shape != pooled.shape:
        raise ValidationError("monthly and pooled transition matrices are not conformable")

    out = np.empty((n, n))
    gps_ok = gps.sum(axis=1) > 0
    pooled_ok = pooled.sum(axis=1) > 0
    for w in range(n):
        if gps_ok[w] and pooled_ok[w]:
            out[w] = (1.0 - gamma) * gps[w] + gamma * pooled[w]
        elif gps_ok[w]:
            out[w] = gps[w]
        elif pooled_ok[w]:
            out[w] = pooled[w]
        else:
            logger.warning("transition row %d unsupported in both priors; using uniform", w)
            out[w] = 1.0 / n
    return out


def route_score(
    w: int,
    prev: int,
    visited: set[int],
    transition: np.ndarray,
    pi: np.ndarray,
    km: np.ndarray,
    params: RoutingParams,
) -> float:
    """Composite next-ward score: blended transition prior, exponential
    distance decay, survey share, and a not-yet-visited novelty indicator."""
    nov = 0.0 if w in visited else 1.0
    return (
        params.lambda_t * transition[prev, w]
        + params.lambda_d * math.exp(-km[prev, w] / params.tau_km)
        + params.lambda_p * pi[w]
        + params.lambda_n * nov
    )


def order_route(
    ward_set: list[int],
    transition: np.ndarray,
    pi: np.ndarray,
    dmatrix: DistanceMatrix,
    params: RoutingParams,
    start: int | None = None,
) -> list[int]:
    """Greedy route over the assigned ward set.

    The start ward defaults to the set's highest-share member. At each step
    the unvisited member with the highest composite score is appended; score
    ties break toward the lower ward index. The result is a permutation of
    the input set.
    """
    if not ward_set:
        raise ValidationError("ward set is empty")
    members = sorted(set(ward_set))
    if start is None:
        start = max(members, key=lambda w: (pi[w], -w))
    elif start not in members:
        raise ValidationError(f"start ward {start} not in ward set")

    km = dmatrix.km
    route = [start]
    visited = {start}
    while len(route) < len(members):
        prev = route[-1]
        best, best_score = None, -math.inf
        for w in members:
            if w in visited:
                continue
            s = route_score(w, prev, visited, transition, pi, km, params)
            if s > best_score:
                best, best_score = w, s
        route.append(best)
        visited.add(best)
    return route


def split_days(route: list[int], nights: int) -> list[list[int]]:
    """Partition the route contiguously into nights + 1 day segments.

    Earlier days absorb the extra ward when the split is uneven; when the
    route is shorter than the day count, trailing days stay in the previous
    day's last ward.
    """
    if nights < 0:
        raise ValidationError(f"nights must be non-negative, got {nights}")
    if not route:
        raise ValidationError("route is empty")
    k = nights + 1
    base, rem = divmod(len(route), k)
    days: list[list[int]] = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < rem else 0)
        if size == 0:
            days.append([days[-1][-1]] if days else [route[0]])
        else:
            days.append(route[pos : pos + size])
            pos += size
    return days


def build_itineraries(
    profiles: list[AgentProfile],
    scopes: dict[str, TripScope],
    priors: MonthlyPriors,
    pi: np.ndarray,
    dmatrix: DistanceMatrix,
    params: RoutingParams,
    rng: np.random.Generator,
) -> list[WardItinerary]:
    """Run the full Stage-2 assignment for a population."""
    missing = [p.agent_id for p in profiles if p.agent_id not in scopes]
    if missing:
        raise ValidationError(f"no trip scope for agents: {missing[:5]}")

    agents = [
        (p.agent_id, p.travel_month, ward_budget(scopes[p.agent_id].locations, params))
        for p in profiles
    ]
    total = sum(u for _, _, u in agents)
    quotas = allocate_quotas(pi, total)
    sets = assign_ward_sets(agents, quotas, priors.visit, priors.pooled_visit, rng)

    blended: dict[int, np.ndarray] = {}
    itineraries = []
    for p in profiles:
        month = p.travel_month
        if month not in blended:
            blended[month] = blend_transition(
                priors.transition.get(month), priors.pooled_transition, params.gamma
            )
        route = order_route(sets[p.agent_id], blended[month], pi, dmatrix, params)
        day_indices = split_days(route, scopes[p.agent_id].nights)
        itineraries.append(
            WardItinerary(
                agent_id=p.agent_id,
                month=month,
                days=[[dmatrix.wards[w] for w in day] for day in day_indices],
            )
        )
    return itineraries


# ---------------------------------------------------------------------------
# File interfaces


def save_itineraries(itineraries: list[WardItinerary], path: str) -> None:
    with open(path, "w") as fh:
        for it in itineraries:
            fh.write(json.dumps(
                {"agent_id": it.agent_id, "month": it.month, "days": it.day_codes()},
                sort_keys=True,
            ))
            fh.write("\n")


def load_itineraries(path: str, wards: WardRegistry) -> list[WardItinerary]:
    out = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    out.append(
                        WardItinerary(
                            agent_id=d["agent_id"],
                            month=int(d["month"]),
                            days=[[wards.by_code(c) for c in day] for day in d["days"]],
                        )
                    )
                except (json.JSONDecodeError, KeyError, ValidationError) as exc:
                    raise InputError(f"{path}:{lineno}: bad itinerary record: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read itinerary file {path}: {exc}") from exc
    return out
