"""Parsing and hard-constraint validation of generated chains.

The parser is tolerant: it extracts every well-formed tuple it can find and
records everything else as violations, never guessing. Validation produces
diagnostics, not exceptions; the repair layer decides what is fatal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import TourSynthError
from ..routing import WardItinerary
from .taxonomy import SLOTS_PER_DAY, ActivityChain, ActivityEpisode, ActivityType

_TUPLE_RE = re.compile(
    r"\(?\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*,\s*([A-Za-z0-9_\-]+)\s*\)?"
)

HALLUCINATION_KINDS = frozenset({"unknown_code", "unknown_ward"})


class ChainParseError(TourSynthError):
    """No usable episode tuple could be extracted from the response."""


@dataclass(frozen=True)
class Violation:
    kind: str   # unparseable | unknown_code | unknown_ward | invalid_times
    line: str

    @property
    def is_hallucination(self) -> bool:
        return self.kind in HALLUCINATION_KINDS


def parse_chain(
    text: str, itinerary: WardItinerary, agent_id: str | None = None
) -> tuple[ActivityChain, list[Violation]]:
    """Extract ``(day, code, t_start, t_end, ward)`` tuples from response text.

    Episodes with an out-of-vocabulary code or ward, or impossible slot
    bounds, are recorded as violations and excluded. The resulting chain is
    sorted by day and start slot, so shuffled input lines yield an identical
    chain. Raises ChainParseError when nothing usable remains.
    """
    vocabulary = {w.code: w for day in itinerary.days for w in day}
    episodes: list[ActivityEpisode] = []
    violations: list[Violation] = []

    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        m = _TUPLE_RE.search(line)
        if m is None:
            violations.append(Violation("unparseable", line))
            continue
        day, code, t_start, t_end = (int(m.group(i)) for i in range(1, 5))
        ward_code = m.group(5)
        if code < 1 or code > 15:
            violations.append(Violation("unknown_code", line))
            continue
        if ward_code not in vocabulary:
            violations.append(Violation("unknown_ward", line))
            continue
        if not (0 <= t_start < t_end <= SLOTS_PER_DAY):
            violations.append(Violation("invalid_times", line))
            continue
        episodes.append(
            ActivityEpisode(
                activity=ActivityType(code),
                day=day,
                t_start=t_start,
                t_end=t_end,
                ward=vocabulary[ward_code],
            )
        )

    if not episodes:
        raise ChainParseError(
            f"no parseable episode tuples in response ({len(violations)} bad lines)"
        )
    episodes.sort(key=lambda e: (e.day, e.t_start, e.t_end))
    return ActivityChain(agent_id=agent_id or itinerary.agent_id, episodes=episodes), violations


@dataclass
class ChainDiagnostics:
    """Per-chain results of the four hard structural checks.

    ``ward_adherence`` is the fraction of in-range-day episodes whose ward
    belongs to that day's assigned list; the other three are booleans.
    Episodes on out-of-range days are handled by the night-count check alone.
    """

    day_coverage: bool
    ward_adherence: float
    night_alignment: bool
    hallucination: bool
    overlap_free: bool
    violations: tuple[Violation, ...] = ()

    @property
    def hard_failure(self) -> bool:
        # Gaps are repairable; wrong day structure, out-of-vocabulary
        # references, and overlapping episodes are not.
        return (not self.night_alignment) or self.hallucination or (not self.overlap_free)

    @property
    def fully_consistent(self) -> bool:
        return (
            self.day_coverage
            and self.ward_adherence == 1.0
            and self.night_alignment
            and not self.hallucination
        )


def validate_chain(
    chain: ActivityChain,
    itinerary: WardItinerary,
    violations: tuple[Violation, ...] | list[Violation] = (),
) -> ChainDiagnostics:
    """Check day coverage, ward adherence, night-count alignment, and
    hallucination against the Stage-2 itinerary.

    Night-count alignment requires the chain's day indices to be exactly
    0..D-1 where D is the itinerary day count (nights + 1 by construction).
    Day coverage requires every expected day to partition [0, 96] exactly.
    """
    expected_days = len(itinerary.days)
    by_day = chain.by_day()
    in_range = {d: eps for d, eps in by_day.items() if 0 <= d < expected_days}

    night_alignment = sorted(by_day) == list(range(expected_days))

    overlap_free = True
    coverage = bool(in_range) and set(in_range) == set(range(expected_days))
    for day, eps in in_range.items():
        cursor = 0
        for ep in eps:
            if ep.t_start < cursor:
                overlap_free = False
            if ep.t_start != cursor:
                coverage = False
            cursor = max(cursor, ep.t_end)
        if cursor != SLOTS_PER_DAY:
            coverage = False

    day_wards = [{w.code for w in day} for day in itinerary.days]
    episodes_in_range = [ep for eps in in_range.values() for ep in eps]
    if episodes_in_range:
        adherent = sum(1 for ep in episodes_in_range if ep.ward.code in day_wards[ep.day])
        ward_adherence = adherent / len(episodes_in_range)
    else:
        ward_adherence = 0.0

    vocabulary = {w.code for day in itinerary.days for w in day}
    hallucination = any(v.is_hallucination for v in violations) or any(
        not (1 <= int(ep.activity) <= 15) or ep.ward.code not in vocabulary
        for ep in chain.episodes
    )

    return ChainDiagnostics(
        day_coverage=coverage and overlap_free,
        ward_adherence=ward_adherence,
        night_alignment=night_alignment,
        hallucination=hallucination,
        overlap_free=overlap_free,
        violations=tuple(violations),
    )


def fill_gaps(chain: ActivityChain, itinerary: WardItinerary) -> ActivityChain:
    """Fill residual temporal gaps with rest episodes.

    Each gap becomes one rest (code 1) episode in the day's last-used ward;
    a gap before the first episode uses that episode's ward. Days absent
    from the chain are filled wholesale in the day's first assigned ward.
    The result covers [0, 96] on every itinerary day.
    """
    by_day = chain.by_day()
    episodes: list[ActivityEpisode] = [
        ep for d, eps in by_day.items() if d >= len(itinerary.days) for ep in eps
    ]
    for day in range(len(itinerary.days)):
        eps = by_day.get(day, [])
        if not eps:
            episodes.append(
                ActivityEpisode(ActivityType.HOME, day, 0, SLOTS_PER_DAY, itinerary.days[day][0])
            )
            continue
        cursor = 0
        last_ward = eps[0].ward
        for ep in eps:
            if ep.t_start > cursor:
                episodes.append(
                    ActivityEpisode(ActivityType.HOME, day, cursor, ep.t_start, last_ward)
                )
            episodes.append(ep)
            cursor = ep.t_end
            last_ward = ep.ward
        if cursor < SLOTS_PER_DAY:
            episodes.append(
                ActivityEpisode(ActivityType.HOME, day, cursor, SLOTS_PER_DAY, last_ward)
            )
    episodes.sort(key=lambda e: (e.day, e.t_start, e.t_end))
    return ActivityChain(agent_id=chain.agent_id, episodes=episodes)


def day_ward_orders(chain: ActivityChain) -> list[list[str]]:
    """Per-day ward visit order with consecutive repeats collapsed."""
    by_day = chain.by_day()
    orders = []
    for day in sorted(by_day):
        seq: list[str] = []
        for ep in by_day[day]:
            if not seq or seq[-1] != ep.ward.code:
                seq.append(ep.ward.code)
        orders.append(seq)
    return orders
