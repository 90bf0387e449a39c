"""Structured prompt assembly for the chat-completion backend.

The prompt is built from six fixed sections, in order: task description,
activity type codes, location information, generation guidelines, agent
context (including the household head chain for companion requests), and
the output format with examples. Assembly is deterministic, so a fixture
agent always yields a byte-identical prompt.
"""

from __future__ import annotations

from ..errors import ValidationError
from ..geo import DistanceMatrix
from ..population import AgentProfile
from ..routing import WardItinerary
from ..scope import TripScope
from .taxonomy import ACTIVITY_DESCRIPTIONS, ACTIVITY_LABELS, ActivityChain, ActivityType, chain_to_text

_TASK = """\
# Task
Generate a realistic multi-day activity schedule for one visitor to the city.
The visitor stays in the assigned wards listed below. Produce one activity
episode per line on a 96-slot quarter-hour grid (slot 0 = 00:00, slot 96 =
midnight). Episodes of each day must cover the full day without gaps or
overlaps, and every episode must use one of that day's assigned wards."""

_GUIDELINES = """\
# Generation guidelines
- Keep times coherent: start at slot 0, end at slot 96, no overlaps.
- Match activities to the visitor's purpose of travel.
- Insert a transport episode (code 15) whenever the ward changes during a day.
- Vary activities across days instead of repeating one identical day.
- Stay inside the assigned wards for the day; do not invent other places."""

_OUTPUT_FORMAT = """\
# Output format
Write one episode per line as a tuple: (day, code, t_start, t_end, ward)
- day: 0-based day index
- code: activity type code from the table above
- t_start, t_end: quarter-hour slot indices, 0 <= t_start < t_end <= 96
- ward: one of the day's assigned ward codes
Example:
(0, 1, 0, 34, ward_a)
(0, 9, 34, 50, ward_a)
(0, 7, 50, 55, ward_a)
(0, 15, 55, 57, ward_b)
(0, 5, 57, 88, ward_b)
(0, 1, 88, 96, ward_b)
Output only episode tuples, one per line, covering every day."""

_VARIATION_INSTRUCTION = """\
This traveler accompanies the household head whose schedule is given above.
Generate the companion's own schedule with constrained variation: keep
exactly the same day count and the same ward order within each day as the
head, but let the activity types reflect the companion's own purpose."""


def build_prompt(
    profile: AgentProfile,
    scope: TripScope,
    itinerary: WardItinerary,
    dmatrix: DistanceMatrix,
    head_chain: ActivityChain | None = None,
) -> str:
    """Assemble the full generation prompt for one agent."""
    if len(itinerary.days) != scope.nights + 1:
        raise ValidationError(
            f"{itinerary.agent_id}: itinerary has {len(itinerary.days)} days "
            f"but scope implies {scope.nights + 1}"
        )
    sections = [
        _TASK,
        _activity_codes_section(),
        _location_section(itinerary, dmatrix),
        _GUIDELINES,
        _agent_context_section(profile, scope, head_chain),
        _OUTPUT_FORMAT,
    ]
    return "\n\n".join(sections)


def _activity_codes_section() -> str:
    lines = ["# Activity type codes"]
    for t in ActivityType:
        lines.append(f"{int(t)}: {ACTIVITY_LABELS[t]} - {ACTIVITY_DESCRIPTIONS[t]}")
    return "\n".join(lines)


def _location_section(itinerary: WardItinerary, dmatrix: DistanceMatrix) -> str:
    lines = ["# Location information", f"Trip days: {len(itinerary.days)}"]
    for day, wards in enumerate(itinerary.days):
        codes = ", ".join(w.code for w in wards)
        lines.append(f"Day {day} assigned wards (visit in this order): {codes}")
        for a, b in zip(wards, wards[1:]):
            if a.code != b.code:
                lines.append(f"  distance {a.code} -> {b.code}: {dmatrix.between(a, b):.1f} km")
    return "\n".join(lines)


def _agent_context_section(
    profile: AgentProfile, scope: TripScope, head_chain: ActivityChain | None
) -> str:
    lines = [
        "# Agent context",
        f"Gender: {profile.gender}",
        f"Age: {profile.age}",
        f"Purpose of travel: {profile.purpose}",
        f"Travel companions: {profile.companion}",
        f"Household role: {profile.household_role}",
        f"Nights stayed: {scope.nights}",
        f"Planned number of visited locations: {scope.locations}",
        f"Travel month: {profile.travel_month}",
    ]
    if head_chain is not None:
        lines.append("")
        lines.append("Household head schedule (reference):")
        lines.append(chain_to_text(head_chain))
        lines.append("")
        lines.append(_VARIATION_INSTRUCTION)
    return "\n".join(lines)
