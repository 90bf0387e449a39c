"""Deterministic offline chain generator.

Produces parseable tuple text with the same structure the remote service is
prompted for: accommodation until morning, purpose-keyed daytime blocks in
the day's assigned wards (in order), transport episodes at every within-day
ward change, dining near midday and evening, and accommodation to the end of
the grid. Output is a pure function of (profile, itinerary, seed).
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..population import AgentProfile
from ..routing import WardItinerary
from .taxonomy import SLOTS_PER_DAY, ActivityType

BUSINESS_PURPOSES = frozenset(
    {"Business", "International conference", "Expo/trade fair", "Corporate conference"}
)

_PURPOSE_PATTERNS: dict[str, tuple[ActivityType, ...]] = {
    "Sightseeing": (ActivityType.SIGHTSEEING, ActivityType.SHOPPING, ActivityType.DINING),
    "Visiting relatives": (ActivityType.SOCIAL, ActivityType.SIGHTSEEING, ActivityType.SHOPPING),
    "Incentive/Study abroad": (ActivityType.EDUCATION, ActivityType.EDUCATION, ActivityType.SIGHTSEEING),
    "Other": (ActivityType.SIGHTSEEING, ActivityType.ERRANDS, ActivityType.SHOPPING),
}
_BUSINESS_PATTERN = (ActivityType.WORK, ActivityType.WORK, ActivityType.WORK)
_DEFAULT_PATTERN = (ActivityType.SIGHTSEEING, ActivityType.SHOPPING, ActivityType.DINING)

_LUNCH_MID = 49.5   # ~12:30
_DINNER_MID = 73.5  # ~18:30


def _daytime_pattern(purpose: str) -> tuple[ActivityType, ...]:
    if purpose in BUSINESS_PURPOSES:
        return _BUSINESS_PATTERN
    return _PURPOSE_PATTERNS.get(purpose, _DEFAULT_PATTERN)


def fallback_generate(
    profile: AgentProfile,
    itinerary: WardItinerary,
    rng: int | np.random.Generator,
) -> str:
    """Emit one tuple line per episode for every itinerary day."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    pattern = _daytime_pattern(profile.purpose)

    lines: list[str] = []
    for day, wards in enumerate(itinerary.days):
        wake = 32 + int(rng.integers(0, 4))
        sleep_start = 88 + int(rng.integers(0, 4))
        lines.append(_tuple_line(day, ActivityType.HOME, 0, wake, wards[0].code))
        lines.extend(_daytime_lines(day, wards, wake, sleep_start, pattern))
        lines.append(_tuple_line(day, ActivityType.HOME, sleep_start, SLOTS_PER_DAY, wards[-1].code))
    return "\n".join(lines)


def _daytime_lines(day, wards, wake, sleep_start, pattern):
    k = len(wards)
    span = sleep_start - wake
    transport_slots = 2
    activity_total = span - transport_slots * (k - 1)
    if activity_total < k:
        transport_slots = 1
        activity_total = span - (k - 1)
    if activity_total < k:
        raise ValidationError(f"day {day}: {k} wards do not fit into {span} daytime slots")

    base, rem = divmod(activity_total, k)
    block_sizes = [base + (1 if i < rem else 0) for i in range(k)]

    cursor = wake
    activity_chunks: list[list] = []  # mutable [code, start, end, ward]
    transport_lines: list[tuple[int, int, str]] = []
    chunk_counter = 0
    for i, (ward, size) in enumerate(zip(wards, block_sizes)):
        if i > 0:
            transport_lines.append((cursor, cursor + transport_slots, ward.code))
            cursor += transport_slots
        n_chunks = max(1, size // 8)
        cbase, crem = divmod(size, n_chunks)
        for j in range(n_chunks):
            csize = cbase + (1 if j < crem else 0)
            code = pattern[chunk_counter % len(pattern)]
            activity_chunks.append([code, cursor, cursor + csize, ward.code])
            cursor += csize
            chunk_counter += 1

    _override_meal(activity_chunks, _LUNCH_MID)
    _override_meal(activity_chunks, _DINNER_MID)

    merged = [
        (s, e, _tuple_line(day, code, s, e, w)) for code, s, e, w in activity_chunks
    ] + [
        (s, e, _tuple_line(day, ActivityType.TRANSPORT, s, e, w)) for s, e, w in transport_lines
    ]
    merged.sort(key=lambda item: item[0])
    return [line for _, _, line in merged]


def _override_meal(chunks: list[list], target_mid: float) -> None:
    candidates = [i for i, c in enumerate(chunks) if c[0] != ActivityType.DINING]
    if not candidates:
        return
    best = min(candidates, key=lambda i: (abs((chunks[i][1] + chunks[i][2]) / 2.0 - target_mid), i))
    chunks[best][0] = ActivityType.DINING


def _tuple_line(day: int, code: ActivityType, start: int, end: int, ward_code: str) -> str:
    return f"({day}, {int(code)}, {start}, {end}, {ward_code})"
