"""Synthetic base population drawn from survey marginals.

Attributes are sampled independently per marginal unless a joint
purpose-by-companion table is supplied. Group-travel draws spawn households
with one head and 1-3 companions; companions share the head's travel month.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ValidationError

logger = logging.getLogger(__name__)

PURPOSES = (
    "Sightseeing",
    "Visiting relatives",
    "Business",
    "International conference",
    "Expo/trade fair",
    "Corporate conference",
    "Incentive/Study abroad",
    "Other",
)

SOLO_COMPANION = "alone"
DEFAULT_HOUSEHOLD_SIZES = {2: 0.7, 3: 0.2, 4: 0.1}
MAX_HOUSEHOLD_SIZE = 4

_SUM_TOL = 1e-6


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    gender: str
    age: int
    purpose: str
    companion: str
    origin: str
    expenditure_percentile: float
    household_id: str
    household_role: str  # "head" | "companion"
    travel_month: int

    def to_json_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "gender": self.gender,
            "age": self.age,
            "purpose": self.purpose,
            "companion": self.companion,
            "origin": self.origin,
            "expenditure_percentile": self.expenditure_percentile,
            "household_id": self.household_id,
            "household_role": self.household_role,
            "travel_month": self.travel_month,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AgentProfile":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass
class SurveyMarginals:
    """Validated survey distributions driving population synthesis."""

    gender: dict[str, float]
    age_band: dict[str, float]
    purpose: dict[str, float]
    companion: dict[str, float]
    origin: dict[str, float]
    nights: dict[int, float]
    locations: dict[int, float]
    expenditure: dict[int, float]
    ward: dict[str, float]
    month_weights: dict[int, float] | None = None
    household_size: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_HOUSEHOLD_SIZES))
    age_band_ranges: dict[str, tuple[int, int]] = field(default_factory=dict)
    purpose_by_companion: dict[str, dict[str, float]] | None = None

    def __post_init__(self):
        for name in ("gender", "age_band", "purpose", "companion", "origin",
                     "nights", "locations", "expenditure", "ward", "household_size"):
            _check_distribution(name, getattr(self, name))
        if self.month_weights is not None:
            _check_distribution("month_weights", self.month_weights)
        if self.purpose_by_companion:
            for comp, dist in self.purpose_by_companion.items():
                _check_distribution(f"purpose_by_companion[{comp}]", dist)
        if max(self.household_size) > MAX_HOUSEHOLD_SIZE:
            raise ValidationError(f"household size above configured max {MAX_HOUSEHOLD_SIZE}")
        if not self.age_band_ranges:
            self.age_band_ranges = {b: _parse_age_band(b) for b in self.age_band}


def _check_distribution(name: str, dist: dict) -> None:
    if not dist:
        raise ValidationError(f"distribution {name!r} is empty")
    total = sum(dist.values())
    if abs(total - 1.0) > _SUM_TOL:
        raise ValidationError(f"distribution {name!r} sums to {total:.6f}, expected 1")
    if any(p < 0 for p in dist.values()):
        raise ValidationError(f"distribution {name!r} has negative probabilities")
    # Exact renormalization so downstream invariants hold at 1e-9.
    for k in dist:
        dist[k] = dist[k] / total


def _parse_age_band(band: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", band)
    if m:
        return int(m.group(1)), int(m.group(2))
    m = re.fullmatch(r"(\d+)\s*\+", band)
    if m:
        lo = int(m.group(1))
        return lo, lo + 19
    raise ValidationError(f"cannot parse age band {band!r}; supply age_band_ranges")


def load_marginals(path: str) -> SurveyMarginals:
    """Load and validate the survey marginals JSON.

    Unknown purpose categories are dropped and the distribution renormalized
    with a warning; a distribution that does not sum to 1 (within 1e-6) is
    rejected with the offending field named.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read marginals file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"marginals file {path} is not valid JSON: {exc}") from exc

    required = ["gender", "age_band", "purpose", "companion", "origin",
                "nights", "locations", "expenditure", "ward"]
    missing = [k for k in required if k not in raw]
    if missing:
        raise InputError(f"marginals file {path} missing fields: {missing}")

    purpose = dict(raw["purpose"])
    _check_distribution("purpose", purpose)
    unknown = [p for p in purpose if p not in PURPOSES]
    if unknown:
        logger.warning("dropping unknown purpose categories %s and renormalizing", unknown)
        for p in unknown:
            del purpose[p]
        if not purpose:
            raise ValidationError("purpose distribution has no known categories")
        _check_distribution_renorm(purpose)

    kwargs = dict(
        gender=dict(raw["gender"]),
        age_band=dict(raw["age_band"]),
        purpose=purpose,
        companion=dict(raw["companion"]),
        origin=dict(raw["origin"]),
        nights=_int_keys(raw["nights"], "nights"),
        locations=_int_keys(raw["locations"], "locations"),
        expenditure=_int_keys(raw["expenditure"], "expenditure"),
        ward=dict(raw["ward"]),
    )
    if "month_weights" in raw:
        kwargs["month_weights"] = _int_keys(raw["month_weights"], "month_weights")
    if "household_size" in raw:
        kwargs["household_size"] = _int_keys(raw["household_size"], "household_size")
    if "age_band_ranges" in raw:
        kwargs["age_band_ranges"] = {b: (int(lo), int(hi)) for b, (lo, hi) in raw["age_band_ranges"].items()}
    if "purpose_by_companion" in raw:
        kwargs["purpose_by_companion"] = {c: dict(d) for c, d in raw["purpose_by_companion"].items()}
    try:
        return SurveyMarginals(**kwargs)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _check_distribution_renorm(dist: dict) -> None:
    total = sum(dist.values())
    for k in dist:
        dist[k] = dist[k] / total


def _int_keys(dist: dict, name: str) -> dict[int, float]:
    try:
        return {int(k): float(v) for k, v in dist.items()}
    except ValueError as exc:
        raise ValidationError(f"distribution {name!r} has non-integer keys: {exc}") from exc


def draw_categorical(rng: np.random.Generator, dist: dict) -> object:
    keys = list(dist)
    probs = np.fromiter((dist[k] for k in keys), dtype=float)
    return keys[rng.choice(len(keys), p=probs / probs.sum())]


def expenditure_percentile(value: int, expenditure: dict[int, float]) -> float:
    """Midpoint-CDF percentile of an expenditure value within its marginal."""
    below = sum(p for v, p in expenditure.items() if v < value)
    at = expenditure.get(value, 0.0)
    return 100.0 * (below + 0.5 * at)


def synthesize_population(
    marginals: SurveyMarginals, n_agents: int, seed: int
) -> list[AgentProfile]:
    """Draw a deterministic synthetic population of exactly ``n_agents``.

    Households are generated whole; if the final household would overshoot,
    only its companions are truncated, so the one-head invariant holds.
    """
    if n_agents <= 0:
        raise ValidationError(f"n_agents must be positive, got {n_agents}")

    # The companion marginal is an agent-level share, but companion type is
    # drawn once per household; weight the household draw by 1/expected size
    # so agent-level shares still match the marginal.
    expected_size = sum(k * p for k, p in marginals.household_size.items())
    household_companion = {
        c: p / (1.0 if c == SOLO_COMPANION else expected_size)
        for c, p in marginals.companion.items()
    }
    total = sum(household_companion.values())
    household_companion = {c: p / total for c, p in household_companion.items()}

    agents: list[AgentProfile] = []
    h = 0
    while len(agents) < n_agents:
        rng = np.random.default_rng(np.random.SeedSequence((seed, h)))
        household = _draw_household(
            marginals, household_companion, rng, h, start_index=len(agents)
        )
        room = n_agents - len(agents)
        agents.extend(household[:room])
        h += 1
    return agents


def _draw_household(
    m: SurveyMarginals,
    household_companion: dict[str, float],
    rng: np.random.Generator,
    h: int,
    start_index: int,
) -> list[AgentProfile]:
    companion_type = str(draw_categorical(rng, household_companion))
    month = int(draw_categorical(rng, m.month_weights)) if m.month_weights else int(rng.integers(1, 13))
    household_id = f"h{h:06d}"

    size = 1
    if companion_type != SOLO_COMPANION:
        size = int(draw_categorical(rng, m.household_size))

    members = []
    for k in range(size):
        members.append(
            _draw_member(
                m,
                rng,
                agent_id=f"a{start_index + k:06d}",
                companion_type=companion_type,
                household_id=household_id,
                role="head" if k == 0 else "companion",
                month=month,
            )
        )
    return members


def _draw_member(
    m: SurveyMarginals,
    rng: np.random.Generator,
    agent_id: str,
    companion_type: str,
    household_id: str,
    role: str,
    month: int,
) -> AgentProfile:
    gender = str(draw_categorical(rng, m.gender))
    band = str(draw_categorical(rng, m.age_band))
    lo, hi = m.age_band_ranges[band]
    age = int(rng.integers(lo, hi + 1))
    purpose_dist = m.purpose
    if m.purpose_by_companion and companion_type in m.purpose_by_companion:
        purpose_dist = m.purpose_by_companion[companion_type]
    purpose = str(draw_categorical(rng, purpose_dist))
    origin = str(draw_categorical(rng, m.origin))
    spend = int(draw_categorical(rng, m.expenditure))
    return AgentProfile(
        agent_id=agent_id,
        gender=gender,
        age=age,
        purpose=purpose,
        companion=companion_type,
        origin=origin,
        expenditure_percentile=expenditure_percentile(spend, m.expenditure),
        household_id=household_id,
        household_role=role,
        travel_month=month,
    )


def save_population(agents: list[AgentProfile], path: str) -> None:
    with open(path, "w") as fh:
        for a in agents:
            fh.write(json.dumps(a.to_json_dict(), sort_keys=True))
            fh.write("\n")


def load_population(path: str) -> list[AgentProfile]:
    out = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(AgentProfile.from_json_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise InputError(f"{path}:{lineno}: bad profile record: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read population file {path}: {exc}") from exc
    return out
