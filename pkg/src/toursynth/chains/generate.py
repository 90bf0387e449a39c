"""Generation orchestration: attempt, validate, regenerate, repair, and the
household copy/variation rules."""

from __future__ import annotations

import logging
from typing import Callable

from ..errors import ValidationError
from ..geo import DistanceMatrix
from ..population import AgentProfile
from ..routing import WardItinerary
from ..scope import TripScope
from ..util import stage_seed
from .client import DEFAULT_MODEL, DEFAULT_TEMPERATURE, FallbackBackend, GenContext, GenRequest, call_generator
from .fallback import BUSINESS_PURPOSES
from .prompt import build_prompt
from .taxonomy import ActivityChain
from .validate import ChainDiagnostics, ChainParseError, day_ward_orders, fill_gaps, parse_chain, validate_chain

logger = logging.getLogger(__name__)


def repair_or_regenerate(
    chain: ActivityChain | None,
    diagnostics: ChainDiagnostics | None,
    itinerary: WardItinerary,
    regenerate: Callable[[int], tuple[ActivityChain, ChainDiagnostics] | None],
    budget: int,
) -> ActivityChain:
    """Drive a candidate chain to full consistency.

    Hard violations (night-count misalignment, hallucination, overlaps)
    trigger full regeneration up to ``budget`` attempts; ``regenerate`` may
    return None for an unparseable attempt. The final attempt must come from
    the deterministic fallback so termination is guaranteed. An accepted
    chain has its residual gaps filled with rest episodes.
    """
    if budget < 1:
        raise ValidationError("repair budget must be at least 1")
    attempt = 0
    while chain is None or diagnostics is None or diagnostics.hard_failure:
        if attempt >= budget:
            raise ValidationError(
                f"{itinerary.agent_id}: no conforming chain within {budget} attempts "
                "(regenerate must terminate with a fallback candidate)"
            )
        result = regenerate(attempt)
        attempt += 1
        if result is None:
            continue
        chain, diagnostics = result
    return fill_gaps(chain, itinerary)


class ChainGenerator:
    """Build prompts, call the backend, and guarantee a consistent chain.

    Content failures (unparseable output, wrong day structure, hallucinated
    codes or wards) are regenerated up to ``attempt_budget`` times and then
    handed to the offline fallback. Transport-level backend errors propagate
    to the caller.
    """

    def __init__(
        self,
        backend,
        dmatrix: DistanceMatrix,
        model: str = DEFAULT_MODEL,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = 2048,
        attempt_budget: int = 3,
        seed: int = 0,
    ):
        self.backend = backend
        self.dmatrix = dmatrix
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.attempt_budget = attempt_budget
        self.seed = seed
        self._fallback = FallbackBackend()

    def _agent_seed(self, agent_id: str, attempt: int) -> int:
        return stage_seed(self.seed, f"chain:{agent_id}:{attempt}")

    def generate(
        self,
        profile: AgentProfile,
        scope: TripScope,
        itinerary: WardItinerary,
        head_chain: ActivityChain | None = None,
    ) -> ActivityChain:
        prompt = build_prompt(profile, scope, itinerary, self.dmatrix, head_chain)

        def attempt_with(backend, attempt: int):
            req = GenRequest(
                prompt=prompt,
                model=self.model,
                temperature=self.temperature,
                max_tokens=self.max_tokens,
                context=GenContext(
                    profile=profile,
                    itinerary=itinerary,
                    seed=self._agent_seed(profile.agent_id, attempt),
                ),
            )
            resp = call_generator(req, backend)
            try:
                chain, violations = parse_chain(resp.text, itinerary, profile.agent_id)
            except ChainParseError as exc:
                logger.debug("%s attempt %d unparseable: %s", profile.agent_id, attempt, exc)
                return None
            return chain, validate_chain(chain, itinerary, violations)

        def regenerate(attempt: int):
            if attempt < self.attempt_budget:
                return attempt_with(self.backend, attempt)
            return attempt_with(self._fallback, attempt)

        # Budget covers the configured backend plus the terminal fallback try.
        return repair_or_regenerate(
            None, None, itinerary, regenerate, budget=self.attempt_budget + 1
        )


def household_expand(
    head_chain: ActivityChain,
    head_profile: AgentProfile,
    members: list[AgentProfile],
    generator: ChainGenerator,
    scopes: dict[str, TripScope],
    itineraries: dict[str, WardItinerary],
    variation_budget: int = 3,
) -> dict[str, ActivityChain]:
    """Produce companion chains from a validated head chain.

    Companions of a non-business head copy the head chain verbatim. A
    business-oriented head with a differing-purpose companion triggers
    constrained-variation generation with the head chain in context; the
    result must preserve the head's day count and per-day ward order, else
    it falls back to a verbatim copy with a warning.
    """
    head_orders = day_ward_orders(head_chain)
    out: dict[str, ActivityChain] = {}
    for member in members:
        if member.household_role == "head":
            continue
        varies = head_profile.purpose in BUSINESS_PURPOSES and member.purpose != head_profile.purpose
        if not varies:
            out[member.agent_id] = head_chain.with_agent_id(member.agent_id)
            continue

        chain = None
        for _ in range(variation_budget):
            candidate = generator.generate(
                member,
                scopes[member.agent_id],
                itineraries[member.agent_id],
                head_chain=head_chain,
            )
            if day_ward_orders(candidate) == head_orders and candidate.day_count() == head_chain.day_count():
                chain = candidate
                break
        if chain is None:
            logger.warning(
                "%s: companion variation failed ward-order check; copying head chain",
                member.agent_id,
            )
            chain = head_chain.with_agent_id(member.agent_id)
        out[member.agent_id] = chain
    return out
