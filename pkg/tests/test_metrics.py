import numpy as np
import pytest

from toursynth.chains import ActivityChain, ActivityEpisode, fallback_generate, parse_chain
from toursynth.errors import ValidationError
from toursynth.metrics import (
    consistency_report,
    distance_w1,
    flow_spearman,
    hop_distances_km,
    mass_coverage,
    monthly_ward_shares,
    normalize_rows,
    row_jsd,
    topk_recall,
    transition_counts_from_itineraries,
    transition_report,
    w1_from_matrices,
    ward_shares_from_itineraries,
    wasserstein1,
)
from toursynth.scope import TripScope
from .conftest import make_itinerary, make_profile
from .oracles import jsd_base2_scipy, spearman_rank_pearson, w1_transport_lp


def rand_stochastic(rng, n, sparse=0.0):
    m = rng.random((n, n))
    if sparse:
        m[rng.random((n, n)) < sparse] = 0.0
    np.fill_diagonal(m, 0.0)
    sums = m.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return m / sums


# ---------------------------------------------------------------------------
# ward shares


def test_ward_shares_single_ward(region):
    its = [make_itinerary(region, agent_id=f"a{i}", day_indices=((0,),)) for i in range(5)]
    shares = ward_shares_from_itineraries(its, len(region.wards))
    assert shares[0] == 1.0
    assert shares.sum() == pytest.approx(1.0)


def test_ward_shares_unique_agent_rule(region):
    # one agent visiting ward 0 on both days counts once
    it = make_itinerary(region, day_indices=((0,), (0,)))
    other = make_itinerary(region, agent_id="b", day_indices=((1,),))
    shares = ward_shares_from_itineraries([it, other], len(region.wards))
    assert shares[0] == pytest.approx(0.5)
    assert shares[1] == pytest.approx(0.5)


def test_ward_shares_match_counting_oracle(region):
    rng = np.random.default_rng(2)
    its = []
    for i in range(40):
        days = tuple(
            tuple(sorted(rng.choice(6, size=rng.integers(1, 3), replace=False)))
            for _ in range(rng.integers(1, 4))
        )
        its.append(make_itinerary(region, agent_id=f"a{i}", day_indices=days))
    shares = ward_shares_from_itineraries(its, 6)
    counts = np.zeros(6)
    for it in its:
        for w in {w.index for day in it.days for w in day}:
            counts[w] += 1
    np.testing.assert_allclose(shares, counts / counts.sum(), atol=1e-12)


def test_monthly_shares_group_by_month(region):
    a = make_itinerary(region, agent_id="a", month=1, day_indices=((0,),))
    b = make_itinerary(region, agent_id="b", month=2, day_indices=((1,),))
    monthly = monthly_ward_shares([a, b], 6)
    assert monthly[1][0] == 1.0 and monthly[2][1] == 1.0


# ---------------------------------------------------------------------------
# row JSD


def test_row_jsd_identity_is_zero():
    rng = np.random.default_rng(3)
    p = rand_stochastic(rng, 5)
    assert row_jsd(p, p) == pytest.approx(0.0, abs=1e-15)


def test_row_jsd_disjoint_support_is_one():
    p = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    q = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    assert row_jsd(p, q) == pytest.approx(1.0, abs=1e-12)


def test_row_jsd_matches_definition_oracle():
    rng = np.random.default_rng(4)
    p = rand_stochastic(rng, 7)
    q = rand_stochastic(rng, 7)
    expected = np.mean([jsd_base2_scipy(p[i], q[i]) for i in range(7)])
    assert row_jsd(p, q) == pytest.approx(expected, abs=1e-12)


def test_row_jsd_weighted_mean():
    rng = np.random.default_rng(5)
    p = rand_stochastic(rng, 4)
    q = rand_stochastic(rng, 4)
    w = np.array([4.0, 1.0, 0.0, 3.0])
    per_row = np.array([jsd_base2_scipy(p[i], q[i]) for i in range(4)])
    assert row_jsd(p, q, w) == pytest.approx((per_row * w).sum() / w.sum(), abs=1e-12)


def test_row_jsd_skips_rows_empty_on_both_sides():
    p = np.array([[0.5, 0.5], [0.0, 0.0]])
    q = np.array([[0.5, 0.5], [0.0, 0.0]])
    assert row_jsd(p, q) == pytest.approx(0.0)


def test_row_jsd_symmetric_under_swap():
    rng = np.random.default_rng(6)
    p = rand_stochastic(rng, 5)
    q = rand_stochastic(rng, 5)
    assert row_jsd(p, q) == pytest.approx(row_jsd(q, p), abs=1e-12)


# ---------------------------------------------------------------------------
# flow spearman


def test_spearman_identity_and_reversal():
    rng = np.random.default_rng(7)
    p = rand_stochastic(rng, 5)
    assert flow_spearman(p, p) == pytest.approx(1.0)
    n = 4
    vals = np.arange(1.0, n * n - n + 1.0)
    p = np.zeros((n, n))
    q = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    p[mask] = vals
    q[mask] = vals[::-1]
    assert flow_spearman(p, q) == pytest.approx(-1.0)


def test_spearman_matches_rank_pearson_oracle():
    rng = np.random.default_rng(8)
    p = rand_stochastic(rng, 6, sparse=0.3)
    q = rand_stochastic(rng, 6, sparse=0.3)
    mask = ~np.eye(6, dtype=bool)
    expected = spearman_rank_pearson(p[mask], q[mask])
    assert flow_spearman(p, q) == pytest.approx(expected, abs=1e-12)


def test_spearman_constant_vector_is_nan(caplog):
    p = np.zeros((3, 3))
    q = rand_stochastic(np.random.default_rng(9), 3)
    with caplog.at_level("WARNING"):
        assert np.isnan(flow_spearman(p, q))


# ---------------------------------------------------------------------------
# Wasserstein


def test_w1_identical_distributions():
    a = np.array([1.0, 2.0, 5.0])
    assert wasserstein1(a, a.copy()) == pytest.approx(0.0)


def test_w1_point_masses():
    assert wasserstein1(np.array([0.0]), np.array([3.5])) == pytest.approx(3.5)


def test_w1_matches_transport_lp_oracle():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a = rng.uniform(0, 10, size=rng.integers(2, 20))
        b = rng.uniform(0, 10, size=rng.integers(2, 20))
        assert wasserstein1(a, b) == pytest.approx(w1_transport_lp(a, b), abs=1e-9)


def test_w1_weighted_matches_lp_oracle():
    rng = np.random.default_rng(11)
    a = rng.uniform(0, 5, size=8)
    b = rng.uniform(0, 5, size=6)
    wa = rng.uniform(0.1, 2.0, size=8)
    wb = rng.uniform(0.1, 2.0, size=6)
    assert wasserstein1(a, b, wa, wb) == pytest.approx(w1_transport_lp(a, b, wa, wb), abs=1e-9)


def test_w1_against_scipy():
    from scipy.stats import wasserstein_distance

    rng = np.random.default_rng(12)
    a = rng.uniform(0, 10, size=50)
    b = rng.uniform(0, 10, size=70)
    assert wasserstein1(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-9)


def test_hop_distances_include_zero_hops(region):
    seqs = [[0, 0, 1]]
    hops = hop_distances_km(seqs, region)
    assert hops[0] == 0.0
    assert hops[1] == region.km[0, 1]


def test_distance_w1_sequences(region):
    a = [[0, 1, 2], [3, 4]]
    b = [[0, 1], [2, 3, 4]]
    got = distance_w1(a, b, region)
    expected = w1_transport_lp(hop_distances_km(a, region), hop_distances_km(b, region))
    assert got == pytest.approx(expected, abs=1e-9)


def test_distance_w1_empty_hop_set_errors(region):
    with pytest.raises(ValidationError, match="hop"):
        distance_w1([[0]], [[1, 2]], region)


# ---------------------------------------------------------------------------
# top-k recall and mass coverage


def test_topk_identity_and_zero():
    rng = np.random.default_rng(13)
    p = rand_stochastic(rng, 6)
    assert topk_recall(p, p, k=20) == 1.0
    assert topk_recall(p, np.zeros_like(p), k=20) == 0.0


def test_topk_matches_edge_set_oracle():
    rng = np.random.default_rng(14)
    p = rand_stochastic(rng, 6, sparse=0.4)
    q = rand_stochastic(rng, 6, sparse=0.4)
    k = 10
    n = 6
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and p[i, j] > 0]
    edges.sort(key=lambda e: (-p[e], e[0] * n + e[1]))
    kk = min(k, len(edges))
    expected = sum(1 for e in edges[:kk] if q[e] > 0) / kk
    assert topk_recall(p, q, k) == pytest.approx(expected)


def test_topk_truncates_with_warning(caplog):
    p = np.zeros((3, 3))
    p[0, 1] = 1.0
    q = p.copy()
    with caplog.at_level("WARNING"):
        assert topk_recall(p, q, k=20) == 1.0
    assert any("truncating" in r.message for r in caplog.records)


def test_mass_coverage_bounds_and_oracle():
    rng = np.random.default_rng(15)
    p = rand_stochastic(rng, 6, sparse=0.3)
    q = rand_stochastic(rng, 6, sparse=0.6)
    assert mass_coverage(p, np.ones_like(p)) == pytest.approx(1.0)
    assert mass_coverage(p, np.zeros_like(p)) == 0.0
    mask = ~np.eye(6, dtype=bool)
    expected = p[mask][q[mask] > 0].sum() / p[mask].sum()
    assert mass_coverage(p, q) == pytest.approx(expected, abs=1e-12)


def test_transition_report_identity(region):
    rng = np.random.default_rng(16)
    p = rand_stochastic(rng, 6)
    report = transition_report(p, p, region)
    assert report.row_jsd == pytest.approx(0.0, abs=1e-12)
    assert report.flow_spearman == pytest.approx(1.0)
    assert report.distance_w1_km == pytest.approx(0.0, abs=1e-12)
    assert report.topk_recall == 1.0
    assert report.mass_coverage == 1.0


def test_w1_from_matrices_weights_edges(region):
    p = np.zeros((6, 6))
    q = np.zeros((6, 6))
    p[0, 1] = 1.0  # all reference mass on edge 0->1
    q[0, 2] = 1.0  # all generated mass on edge 0->2
    expected = abs(region.km[0, 1] - region.km[0, 2])
    assert w1_from_matrices(p, q, region) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# consistency report


def _valid_chain(region, agent_id, itinerary, seed=0):
    text = fallback_generate(make_profile(agent_id=agent_id), itinerary, seed)
    chain, _ = parse_chain(text, itinerary, agent_id)
    return chain


def test_consistency_all_fallback_is_perfect(region):
    its = {}
    chains = []
    for i in range(20):
        aid = f"a{i}"
        it = make_itinerary(region, agent_id=aid, day_indices=((0, 1), (2,)))
        its[aid] = it
        chains.append(_valid_chain(region, aid, it, seed=i))
    report = consistency_report(chains, list(its.values()))
    assert report.day_coverage_rate == 1.0
    assert report.ward_adherence_rate == 1.0
    assert report.night_alignment_rate == 1.0
    assert report.hallucination_rate == 0.0


def test_consistency_one_bad_chain_in_hundred(region):
    its = {}
    chains = []
    for i in range(100):
        aid = f"a{i:03d}"
        it = make_itinerary(region, agent_id=aid, day_indices=((0, 1), (2,)))
        its[aid] = it
        chains.append(_valid_chain(region, aid, it, seed=i))
    # corrupt one chain: drop its day-1 episodes (coverage + alignment break)
    bad = chains[7]
    chains[7] = ActivityChain(bad.agent_id, [ep for ep in bad.episodes if ep.day == 0])
    report = consistency_report(chains, list(its.values()))
    assert report.day_coverage_rate == pytest.approx(0.99)
    assert report.night_alignment_rate == pytest.approx(0.99)
    assert report.ward_adherence_rate == 1.0
    assert report.hallucination_rate == 0.0


def test_consistency_matches_per_chain_oracle(region):
    from toursynth.chains import validate_chain

    rng = np.random.default_rng(21)
    its = {}
    chains = []
    for i in range(40):
        aid = f"a{i:03d}"
        it = make_itinerary(region, agent_id=aid, day_indices=((0, 1), (2,)))
        its[aid] = it
        chain = _valid_chain(region, aid, it, seed=i)
        roll = rng.random()
        if roll < 0.2:
            chain = ActivityChain(aid, [ep for ep in chain.episodes if ep.t_start >= 40 or ep.day != 0])
        elif roll < 0.4:
            # move one episode to a ward outside its day list (but in vocabulary)
            eps = list(chain.episodes)
            target = next(j for j, ep in enumerate(eps) if ep.day == 1)
            eps[target] = ActivityEpisode(
                eps[target].activity, 1, eps[target].t_start, eps[target].t_end, region.wards[0]
            )
            chain = ActivityChain(aid, eps)
        chains.append(chain)
    report = consistency_report(chains, list(its.values()))
    diags = [validate_chain(c, its[c.agent_id]) for c in chains]
    assert report.day_coverage_rate == pytest.approx(np.mean([d.day_coverage for d in diags]))
    assert report.ward_adherence_rate == pytest.approx(np.mean([d.ward_adherence == 1.0 for d in diags]))
    assert report.night_alignment_rate == pytest.approx(np.mean([d.night_alignment for d in diags]))
    assert report.hallucination_rate == pytest.approx(np.mean([d.hallucination for d in diags]))


def test_consistency_rejects_mismatched_agent_sets(region):
    it = make_itinerary(region, agent_id="a0")
    chain = _valid_chain(region, "a1", make_itinerary(region, agent_id="a1"))
    with pytest.raises(ValidationError, match="a0"):
        consistency_report([chain], [it])


def test_consistency_scope_cross_check(region):
    aid = "a0"
    it = make_itinerary(region, agent_id=aid, day_indices=((0,), (1,)))
    chain = _valid_chain(region, aid, it)
    with pytest.raises(ValidationError, match="nights"):
        consistency_report([chain], [it], {aid: TripScope(nights=3, locations=2)})


def test_transition_counts_from_itineraries_unique_agents(region):
    its = [
        make_itinerary(region, agent_id="a", day_indices=((0, 1), (0, 1))),
        make_itinerary(region, agent_id="b", day_indices=((0, 1, 2),)),
    ]
    counts = transition_counts_from_itineraries(its, 6)
    assert counts[0, 1] == 2.0  # both agents, counted once each
    assert counts[1, 2] == 1.0
    assert counts.sum() == 3.0
    rows = normalize_rows(counts)
    assert rows[0].sum() == pytest.approx(1.0)
