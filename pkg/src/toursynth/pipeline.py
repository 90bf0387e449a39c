"""Stage runners behind the CLI subcommands.

Each runner consumes the previous stage's files and writes its own into the
configured output directory, so stages can rerun independently. Per-stage
seeds derive from the global seed via a labeled hash.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import defaultdict

import numpy as np

from . import chains as chains_mod
from . import cohort, metrics, population, routing, scope as scope_mod
from .config import PipelineConfig
from .errors import ValidationError
from .geo import (
    DistanceMatrix,
    WardRegistry,
    build_distance_matrix,
    load_centroids,
    load_distance_matrix,
)
from .util import stage_seed

logger = logging.getLogger(__name__)

PRIORS_FILE = "priors.json"
COHORT_STATS_FILE = "cohort_stats.csv"
POPULATION_FILE = "population.jsonl"
SCOPE_MODEL_FILE = "scope_model.json"
SCOPES_FILE = "scopes.jsonl"
ITINERARIES_FILE = "itineraries.jsonl"
CHAINS_FILE = "chains.jsonl"


def load_region(cfg: PipelineConfig) -> DistanceMatrix:
    """Distance matrix from the configured source: an explicit kilometer
    matrix file wins over centroid haversine."""
    if cfg.distance_matrix:
        return load_distance_matrix(cfg.require_input("distance_matrix"))
    return build_distance_matrix(load_centroids(cfg.require_input("centroids")))


def run_extract(cfg: PipelineConfig) -> dict[str, str]:
    """Stage 0: cohort extraction and monthly priors."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    p0 = cfg.stage0

    if cfg.pings:
        pings = cohort.load_pings(cfg.require_input("pings"))
        staypoints = cohort.merge_pings(pings, p0.space_eps_m, p0.time_eps_s)
    else:
        staypoints = cohort.load_staypoints(cfg.require_input("staypoints"))
    staypoints = cohort.filter_sparse_agents(staypoints, p0.min_distinct_locations)

    catalog = cohort.load_poi_catalog(cfg.require_input("poi_catalog"))
    sightseeing = cohort.sightseeing_categories_from(catalog)
    marginals = population.load_marginals(cfg.require_input("marginals"))
    thresholds = cohort.calibrate_thresholds(
        marginals.nights, marginals.locations, eta=p0.blend_eta
    )

    by_agent: dict[str, list] = defaultdict(list)
    for sp in staypoints:
        by_agent[sp.agent].append(sp)

    stats_rows = []
    tourist_staypoints = []
    for agent in sorted(by_agent):
        sps = sorted(by_agent[agent], key=lambda s: (s.start, s.end))
        matched = [(sp, cohort.match_poi(sp, catalog, p0.dwell_floor_s)) for sp in sps]
        stats = cohort.compute_agent_stats(matched, sightseeing, p0.tz_offset_s)
        is_tourist = cohort.classify_tourist(stats, thresholds)
        stats_rows.append((agent, stats, is_tourist))
        if is_tourist:
            tourist_staypoints.extend(sps)

    stats_path = cfg.out_path(COHORT_STATS_FILE)
    _write_cohort_stats(stats_path, stats_rows)

    if not tourist_staypoints:
        raise ValidationError(
            "no tourists in cohort; priors not written "
            f"({len(by_agent)} agents examined, thresholds {thresholds})"
        )

    centroid_pairs = load_centroids(cfg.require_input("centroids"))
    wards = WardRegistry([w.code for w, _ in centroid_pairs])
    assigned = cohort.assign_wards(tourist_staypoints, centroid_pairs)
    priors = cohort.build_monthly_priors(assigned, wards, p0.tz_offset_s)
    priors_path = cfg.out_path(PRIORS_FILE)
    priors.save(priors_path)
    n_tourists = sum(1 for _, _, t in stats_rows if t)
    logger.info("extracted %d tourists of %d agents", n_tourists, len(stats_rows))
    return {"priors": priors_path, "cohort_stats": stats_path}


def _write_cohort_stats(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "agent_id", "episode_days", "max_consecutive_sightseeing", "distinct_pois",
            "sightseeing_days", "sightseeing_hours", "active_days", "tourist",
        ])
        for agent, s, is_tourist in rows:
            writer.writerow([
                agent, s.episode_days, s.max_consecutive_sightseeing, s.distinct_pois,
                s.sightseeing_days, f"{s.sightseeing_hours:.6f}", s.active_days,
                int(is_tourist),
            ])


def run_synth(cfg: PipelineConfig, n_agents: int | None = None) -> dict[str, str]:
    """Population synthesis from survey marginals."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    n = cfg.n_agents if n_agents is None else n_agents
    marginals = population.load_marginals(cfg.require_input("marginals"))
    agents = population.synthesize_population(marginals, n, stage_seed(cfg.seed, "synth"))
    path = cfg.out_path(POPULATION_FILE)
    population.save_population(agents, path)
    return {"population": path}


def bootstrap_training_data(
    marginals: population.SurveyMarginals, n: int, seed: int
) -> list[tuple[population.AgentProfile, int, int]]:
    """Labeled training examples drawn from the survey marginals themselves.

    Used when no observed (profile, nights, locations) microdata is
    configured; labels are independent draws from the scope marginals.
    """
    profiles = population.synthesize_population(marginals, n, seed)
    labeled = []
    for i, p in enumerate(profiles):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i, 7)))
        nights = int(population.draw_categorical(rng, marginals.nights))
        locs = int(population.draw_categorical(rng, marginals.locations))
        labeled.append((p, nights, locs))
    return labeled


def run_scope(cfg: PipelineConfig) -> dict[str, str]:
    """Stage 1: train the scope model and sample trip scopes per agent."""
    p1 = cfg.stage1
    agents = population.load_population(cfg.require_output(POPULATION_FILE))
    marginals = population.load_marginals(cfg.require_input("marginals"))
    seed = stage_seed(cfg.seed, "scope")

    if p1.training_data:
        labeled = scope_mod.load_training_data(p1.training_data)
    else:
        labeled = bootstrap_training_data(marginals, p1.n_train, stage_seed(cfg.seed, "scope-train"))
    model = scope_mod.train(
        labeled, alpha=p1.alpha, learning_rate=p1.learning_rate, n_iter=p1.n_iter
    )
    model.save(cfg.out_path(SCOPE_MODEL_FILE))

    scopes: dict[str, scope_mod.TripScope] = {}
    for i, agent in enumerate(agents):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        scopes[agent.agent_id] = scope_mod.blended_sample(
            model.schema.encode(agent), model, rng
        )

    # Household co-travel pins trip duration: companions stay the head's nights.
    head_nights = {
        a.household_id: scopes[a.agent_id].nights for a in agents if a.household_role == "head"
    }
    for agent in agents:
        if agent.household_role != "head":
            s = scopes[agent.agent_id]
            scopes[agent.agent_id] = scope_mod.TripScope(
                nights=head_nights[agent.household_id], locations=s.locations
            )

    path = cfg.out_path(SCOPES_FILE)
    scope_mod.save_scopes(scopes, path)
    return {"scope_model": cfg.out_path(SCOPE_MODEL_FILE), "scopes": path}


def run_route(cfg: PipelineConfig) -> dict[str, str]:
    """Stage 2: ward budgets, quota allocation, ordering, day splitting.

    Households route as one unit: the head draws the ward set and the
    companions inherit the head's itinerary, so household co-travel stays
    consistent downstream.
    """
    agents = population.load_population(cfg.require_output(POPULATION_FILE))
    scopes = scope_mod.load_scopes(cfg.require_output(SCOPES_FILE))
    priors = cohort.MonthlyPriors.load(cfg.require_output(PRIORS_FILE))
    marginals = population.load_marginals(cfg.require_input("marginals"))
    dmatrix = load_region(cfg)
    if priors.ward_codes != dmatrix.wards.codes:
        raise ValidationError("priors ward set does not match the configured region")

    pi = np.array([marginals.ward.get(c, 0.0) for c in dmatrix.wards.codes])
    if abs(pi.sum() - 1.0) > 1e-9:
        raise ValidationError("survey ward marginal does not cover the region wards")

    heads = [a for a in agents if a.household_role == "head"]
    rng = np.random.default_rng(stage_seed(cfg.seed, "route"))
    head_itineraries = routing.build_itineraries(
        heads, scopes, priors, pi, dmatrix, cfg.stage2, rng
    )
    by_household = {h.household_id: it for h, it in zip(heads, head_itineraries)}

    itineraries = []
    for agent in agents:
        head_it = by_household[agent.household_id]
        if agent.household_role == "head":
            itineraries.append(head_it)
        else:
            itineraries.append(
                routing.WardItinerary(
                    agent_id=agent.agent_id, month=head_it.month, days=[list(d) for d in head_it.days]
                )
            )
    path = cfg.out_path(ITINERARIES_FILE)
    routing.save_itineraries(itineraries, path)
    return {"itineraries": path}


def _make_backend(cfg: PipelineConfig):
    p3 = cfg.stage3
    if p3.backend == "remote":
        return chains_mod.RemoteBackend(
            endpoint=p3.endpoint,
            api_key_env=p3.api_key_env,
            timeout_s=p3.timeout_s,
            max_retries=p3.retry_cap,
            backoff_base_s=p3.backoff_base_s,
        )
    return chains_mod.FallbackBackend()


def run_chains(cfg: PipelineConfig) -> dict[str, str]:
    """Stage 3: generate, validate, and repair activity chains."""
    agents = population.load_population(cfg.require_output(POPULATION_FILE))
    scopes = scope_mod.load_scopes(cfg.require_output(SCOPES_FILE))
    dmatrix = load_region(cfg)
    itineraries = {
        it.agent_id: it
        for it in routing.load_itineraries(cfg.require_output(ITINERARIES_FILE), dmatrix.wards)
    }
    p3 = cfg.stage3
    generator = chains_mod.ChainGenerator(
        backend=_make_backend(cfg),
        dmatrix=dmatrix,
        model=p3.model,
        temperature=p3.temperature,
        max_tokens=p3.max_tokens,
        attempt_budget=p3.attempt_budget,
        seed=stage_seed(cfg.seed, "chains"),
    )

    households: dict[str, list[population.AgentProfile]] = defaultdict(list)
    for a in agents:
        households[a.household_id].append(a)

    def run_household(household_id: str) -> dict[str, chains_mod.ActivityChain]:
        members = households[household_id]
        head = next(a for a in members if a.household_role == "head")
        head_chain = generator.generate(
            head, scopes[head.agent_id], itineraries[head.agent_id]
        )
        out = {head.agent_id: head_chain}
        out.update(
            chains_mod.household_expand(
                head_chain, head, members, generator, scopes, itineraries
            )
        )
        return out

    results: dict[str, chains_mod.ActivityChain] = {}
    ordered_ids = sorted(households)
    # Households are independent; remote generation is latency-bound, so a
    # bounded worker pool helps there. The fallback path stays sequential
    # (it is pure CPU and must remain byte-deterministic).
    if p3.backend == "remote" and p3.concurrency > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=p3.concurrency) as pool:
            for chunk in pool.map(run_household, ordered_ids):
                results.update(chunk)
    else:
        for household_id in ordered_ids:
            results.update(run_household(household_id))

    ordered = [results[a.agent_id] for a in agents]
    path = cfg.out_path(CHAINS_FILE)
    chains_mod.save_chains(ordered, path)
    return {"chains": path}


def run_eval(cfg: PipelineConfig) -> dict[str, str]:
    """Emit the evaluation reports: share comparisons, monthly gaps,
    transition metrics, and chain consistency rates."""
    marginals = population.load_marginals(cfg.require_input("marginals"))
    priors = cohort.MonthlyPriors.load(cfg.require_output(PRIORS_FILE))
    dmatrix = load_region(cfg)
    wards = dmatrix.wards
    itineraries = routing.load_itineraries(cfg.require_output(ITINERARIES_FILE), wards)
    scopes = scope_mod.load_scopes(cfg.require_output(SCOPES_FILE))
    chains = chains_mod.load_chains(cfg.require_output(CHAINS_FILE), wards)

    out: dict[str, str] = {}
    n = len(wards)

    generated = metrics.ward_shares_from_itineraries(itineraries, n)
    survey = np.array([marginals.ward.get(c, 0.0) for c in wards.codes])
    gps = priors.pooled_visit
    path = cfg.out_path("ward_shares.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ward", "gps_share", "generated_share", "survey_share"])
        for i, code in enumerate(wards.codes):
            writer.writerow([code, f"{gps[i]:.9f}", f"{generated[i]:.9f}", f"{survey[i]:.9f}"])
    out["ward_shares"] = path

    path = cfg.out_path("scope_distributions.csv")
    _write_scope_histograms(path, scopes, marginals)
    out["scope_distributions"] = path

    # annual + per-month share comparisons, then the plain signed-gap heatmap
    monthly_gen = metrics.monthly_ward_shares(itineraries, n)
    comparisons = [metrics.ShareComparison("annual", wards.codes, generated, survey)]
    for m in sorted(monthly_gen):
        if m in priors.visit:
            comparisons.append(
                metrics.ShareComparison(f"month:{m}", wards.codes, monthly_gen[m], priors.visit[m])
            )
    path = cfg.out_path("share_comparison.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "ward", "generated", "reference", "gap"])
        for comparison in comparisons:
            for row in comparison.rows():
                writer.writerow([
                    row["scope"], row["ward"],
                    f"{row['generated']:.9f}", f"{row['reference']:.9f}", f"{row['gap']:.9f}",
                ])
    out["share_comparison"] = path

    path = cfg.out_path("monthly_gap.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "ward", "gap"])
        for comparison in comparisons[1:]:
            month = comparison.scope.split(":")[1]
            for row in comparison.rows():
                writer.writerow([month, row["ward"], f"{row['gap']:.9f}"])
    out["monthly_gap"] = path

    gen_counts = metrics.transition_counts_from_itineraries(itineraries, n)
    report = metrics.transition_report(
        priors.pooled_transition,
        metrics.normalize_rows(gen_counts),
        dmatrix,
        ref_row_weights=priors.pooled_transition_support.sum(axis=1),
    )
    path = cfg.out_path("transition_report.json")
    metrics.save_json_report(report, path)
    out["transition_report"] = path

    consistency = metrics.consistency_report(chains, itineraries, scopes)
    path = cfg.out_path("consistency_report.json")
    metrics.save_json_report(consistency, path)
    out["consistency_report"] = path
    return out


def _write_scope_histograms(path, scopes, marginals) -> None:
    nights = np.zeros(scope_mod.NIGHTS_MAX + 1)
    locs = np.zeros(scope_mod.LOCATIONS_MAX)
    for s in scopes.values():
        nights[s.nights] += 1
        locs[s.locations - 1] += 1
    nights /= nights.sum()
    locs /= locs.sum()

    def ref_hist(dist, size, offset):
        v = np.zeros(size)
        for value, p in dist.items():
            v[min(max(value - offset, 0), size - 1)] += p
        return v

    ref_nights = ref_hist(marginals.nights, scope_mod.NIGHTS_MAX + 1, 0)
    ref_locs = ref_hist(marginals.locations, scope_mod.LOCATIONS_MAX, 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "value", "generated", "reference"])
        for v in range(scope_mod.NIGHTS_MAX + 1):
            writer.writerow(["nights", v, f"{nights[v]:.9f}", f"{ref_nights[v]:.9f}"])
        for v in range(1, scope_mod.LOCATIONS_MAX + 1):
            writer.writerow(["locations", v, f"{locs[v - 1]:.9f}", f"{ref_locs[v - 1]:.9f}"])


def run_pipeline(cfg: PipelineConfig, n_agents: int | None = None) -> dict[str, str]:
    """All stages in order with the fallback-safe defaults."""
    out = {}
    out.update(run_extract(cfg))
    out.update(run_synth(cfg, n_agents))
    out.update(run_scope(cfg))
    out.update(run_route(cfg))
    out.update(run_chains(cfg))
    out.update(run_eval(cfg))
    return out
