"""Closed 15-type activity taxonomy and the episode/chain containers.

Days run on a 96-slot quarter-hour grid anchored at local midnight: slot 0
is 00:00-00:15, slot 95 is 23:45-24:00.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

from ..errors import InputError, ValidationError
from ..geo import WardId, WardRegistry

SLOTS_PER_DAY = 96


class ActivityType(IntEnum):
    HOME = 1
    WORK = 2
    EDUCATION = 3
    CARE = 4
    SHOPPING = 5
    SERVICES = 6
    DINING = 7
    ERRANDS = 8
    SIGHTSEEING = 9
    SPORTS = 10
    SOCIAL = 11
    HEALTHCARE = 12
    RELIGIOUS = 13
    MISC = 14
    TRANSPORT = 15


ACTIVITY_LABELS: dict[ActivityType, str] = {
    ActivityType.HOME: "Home (Stay)",
    ActivityType.WORK: "Work",
    ActivityType.EDUCATION: "Education",
    ActivityType.CARE: "Care",
    ActivityType.SHOPPING: "Shopping",
    ActivityType.SERVICES: "Services",
    ActivityType.DINING: "Dining",
    ActivityType.ERRANDS: "Personal Errands",
    ActivityType.SIGHTSEEING: "Recreation/Sightseeing",
    ActivityType.SPORTS: "Exercise/Sports",
    ActivityType.SOCIAL: "Social Visits",
    ActivityType.HEALTHCARE: "Healthcare",
    ActivityType.RELIGIOUS: "Religious",
    ActivityType.MISC: "Miscellaneous",
    ActivityType.TRANSPORT: "Transport",
}

ACTIVITY_DESCRIPTIONS: dict[ActivityType, str] = {
    ActivityType.HOME: "resting or staying at the accommodation",
    ActivityType.WORK: "work duties, meetings, conference sessions",
    ActivityType.EDUCATION: "classes, study programs, campus visits",
    ActivityType.CARE: "caring for a household member",
    ActivityType.SHOPPING: "shopping for goods",
    ActivityType.SERVICES: "banking, post, and other services",
    ActivityType.DINING: "eating at a restaurant or cafe",
    ActivityType.ERRANDS: "short personal errands",
    ActivityType.SIGHTSEEING: "sightseeing, attractions, recreation",
    ActivityType.SPORTS: "exercise or sports activities",
    ActivityType.SOCIAL: "visiting friends or relatives",
    ActivityType.HEALTHCARE: "medical or wellness appointments",
    ActivityType.RELIGIOUS: "visiting temples, shrines, or services",
    ActivityType.MISC: "anything not covered by other types",
    ActivityType.TRANSPORT: "traveling between wards or venues",
}


@dataclass(frozen=True)
class ActivityEpisode:
    """One scheduled activity on the quarter-hour grid of one day."""

    activity: ActivityType
    day: int
    t_start: int
    t_end: int
    ward: WardId

    def __post_init__(self):
        if self.day < 0:
            raise ValidationError(f"day index must be non-negative, got {self.day}")
        if not (0 <= self.t_start < self.t_end <= SLOTS_PER_DAY):
            raise ValidationError(
                f"episode slots ({self.t_start}, {self.t_end}) must satisfy "
                f"0 <= start < end <= {SLOTS_PER_DAY}"
            )


@dataclass
class ActivityChain:
    """All episodes of one agent, grouped by day on demand."""

    agent_id: str
    episodes: list[ActivityEpisode]

    def by_day(self) -> dict[int, list[ActivityEpisode]]:
        grouped: dict[int, list[ActivityEpisode]] = {}
        for ep in sorted(self.episodes, key=lambda e: (e.day, e.t_start, e.t_end)):
            grouped.setdefault(ep.day, []).append(ep)
        return grouped

    def day_count(self) -> int:
        return len({ep.day for ep in self.episodes})

    def with_agent_id(self, agent_id: str) -> "ActivityChain":
        return ActivityChain(agent_id=agent_id, episodes=list(self.episodes))


def chain_to_text(chain: ActivityChain) -> str:
    """Render a chain in the canonical one-tuple-per-line output format."""
    lines = [
        f"({ep.day}, {int(ep.activity)}, {ep.t_start}, {ep.t_end}, {ep.ward.code})"
        for ep in sorted(chain.episodes, key=lambda e: (e.day, e.t_start, e.t_end))
    ]
    return "\n".join(lines)


def save_chains(chains: list[ActivityChain], path: str) -> None:
    """One JSON record per episode: agent_id, day, code, t_start, t_end, ward."""
    with open(path, "w") as fh:
        for chain in chains:
            for ep in sorted(chain.episodes, key=lambda e: (e.day, e.t_start, e.t_end)):
                fh.write(json.dumps(
                    {
                        "agent_id": chain.agent_id,
                        "day": ep.day,
                        "code": int(ep.activity),
                        "t_start": ep.t_start,
                        "t_end": ep.t_end,
                        "ward": ep.ward.code,
                    },
                    sort_keys=True,
                ))
                fh.write("\n")


def load_chains(path: str, wards: WardRegistry) -> list[ActivityChain]:
    by_agent: dict[str, list[ActivityEpisode]] = {}
    order: list[str] = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    ep = ActivityEpisode(
                        activity=ActivityType(int(d["code"])),
                        day=int(d["day"]),
                        t_start=int(d["t_start"]),
                        t_end=int(d["t_end"]),
                        ward=wards.by_code(d["ward"]),
                    )
                except (json.JSONDecodeError, KeyError, ValueError, ValidationError) as exc:
                    raise InputError(f"{path}:{lineno}: bad episode record: {exc}") from exc
                if d["agent_id"] not in by_agent:
                    by_agent[d["agent_id"]] = []
                    order.append(d["agent_id"])
                by_agent[d["agent_id"]].append(ep)
    except OSError as exc:
        raise InputError(f"cannot read chain file {path}: {exc}") from exc
    return [ActivityChain(agent_id=a, episodes=by_agent[a]) for a in order]
