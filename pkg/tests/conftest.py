"""Shared fixtures: a small synthetic region, profiles, and itineraries."""

from __future__ import annotations

import numpy as np
import pytest

from toursynth.geo import GeoPoint, WardId, build_distance_matrix
from toursynth.population import AgentProfile
from toursynth.routing import WardItinerary
from toursynth.scope import TripScope


@pytest.fixture(scope="session")
def region():
    """Six wards on a rough grid around central Tokyo."""
    coords = [
        ("alpha", 35.69, 139.70),
        ("bravo", 35.69, 139.76),
        ("charlie", 35.66, 139.73),
        ("delta", 35.71, 139.80),
        ("echo", 35.64, 139.78),
        ("foxtrot", 35.72, 139.66),
    ]
    return build_distance_matrix(
        [(WardId(i, code), GeoPoint(lat, lon)) for i, (code, lat, lon) in enumerate(coords)]
    )


def make_profile(
    agent_id="a000000",
    gender="female",
    age=34,
    purpose="Sightseeing",
    companion="alone",
    origin="international",
    expenditure_percentile=55.0,
    household_id="h000000",
    household_role="head",
    travel_month=7,
) -> AgentProfile:
    return AgentProfile(
        agent_id=agent_id,
        gender=gender,
        age=age,
        purpose=purpose,
        companion=companion,
        origin=origin,
        expenditure_percentile=expenditure_percentile,
        household_id=household_id,
        household_role=household_role,
        travel_month=travel_month,
    )


def make_itinerary(region, agent_id="a000000", month=7, day_indices=((0, 1), (2,))) -> WardItinerary:
    return WardItinerary(
        agent_id=agent_id,
        month=month,
        days=[[region.wards[i] for i in day] for day in day_indices],
    )


@pytest.fixture
def profile():
    return make_profile()


@pytest.fixture
def itinerary(region):
    return make_itinerary(region)


@pytest.fixture
def scope_two_days():
    return TripScope(nights=1, locations=4)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
