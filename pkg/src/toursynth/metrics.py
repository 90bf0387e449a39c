"""Distributional evaluation suite.

Ward-share comparisons, row-wise Jensen-Shannon divergence, flow rank
correlation, hop-distance Wasserstein gap, top-k edge recall, reference mass
coverage, and the four chain consistency rates. Every metric here has a
brute-force definitional oracle in the test suite.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chains import ActivityChain, validate_chain
from .errors import ValidationError
from .geo import DistanceMatrix
from .routing import WardItinerary
from .scope import TripScope

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Ward shares


def ward_shares_from_itineraries(itineraries: list[WardItinerary], n_wards: int) -> np.ndarray:
    """Unique-agent visit counts per ward, normalized. An agent visiting a
    ward on several days counts once."""
    if not itineraries:
        raise ValidationError("no itineraries supplied")
    counts = np.zeros(n_wards)
    for it in itineraries:
        for w in it.ward_set:
            counts[w.index] += 1
    return counts / counts.sum()


def ward_shares_from_assigned(assigned, n_wards: int) -> np.ndarray:
    """Same rule over (staypoint, ward) pairs from the cohort side."""
    seen: set[tuple[str, int]] = set()
    counts = np.zeros(n_wards)
    for sp, ward in assigned:
        key = (sp.agent, ward.index)
        if key not in seen:
            seen.add(key)
            counts[ward.index] += 1
    if counts.sum() == 0:
        raise ValidationError("no ward visits in input")
    return counts / counts.sum()


def monthly_ward_shares(itineraries: list[WardItinerary], n_wards: int) -> dict[int, np.ndarray]:
    by_month: dict[int, list[WardItinerary]] = {}
    for it in itineraries:
        by_month.setdefault(it.month, []).append(it)
    return {m: ward_shares_from_itineraries(its, n_wards) for m, its in sorted(by_month.items())}


def transition_counts_from_itineraries(
    itineraries: list[WardItinerary], n_wards: int
) -> np.ndarray:
    """Unique-agent counts of consecutive same-day ward pairs, pooled over
    months; the generated-side analogue of the cohort transition support."""
    pair_agents: dict[tuple[int, int], set[str]] = {}
    for it in itineraries:
        for day in it.days:
            for a, b in zip(day, day[1:]):
                if a.index == b.index:
                    continue
                pair_agents.setdefault((a.index, b.index), set()).add(it.agent_id)
    counts = np.zeros((n_wards, n_wards))
    for (i, j), agents in pair_agents.items():
        counts[i, j] = len(agents)
    return counts


def normalize_rows(counts: np.ndarray) -> np.ndarray:
    out = np.zeros_like(counts, dtype=float)
    sums = counts.sum(axis=1)
    mask = sums > 0
    out[mask] = counts[mask] / sums[mask, None]
    return out


@dataclass
class ShareComparison:
    """Generated vs reference ward shares with signed gaps, for one scope."""

    scope: str  # "annual" or "month:<m>"
    ward_codes: list[str]
    generated: np.ndarray
    reference: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.generated - self.reference

    def rows(self) -> list[dict]:
        return [
            {
                "scope": self.scope,
                "ward": c,
                "generated": float(self.generated[i]),
                "reference": float(self.reference[i]),
                "gap": float(self.gap[i]),
            }
            for i, c in enumerate(self.ward_codes)
        ]


# ---------------------------------------------------------------------------
# Transition metrics


def _jsd_base2(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def row_jsd(p: np.ndarray, q: np.ndarray, row_weights: np.ndarray | None = None) -> float:
    """Weighted mean over rows of the base-2 Jensen-Shannon divergence.

    Rows are normalized before comparison. Rows with zero mass on both sides
    are skipped; a row supported on one side only scores the base-2 maximum
    of 1. ``row_weights`` defaults to an unweighted mean over included rows;
    pass reference row masses to weight by observed flow.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2:
        raise ValidationError("row_jsd expects two conformable matrices")
    n = p.shape[0]
    weights = np.ones(n) if row_weights is None else np.asarray(row_weights, dtype=float)
    if weights.shape != (n,):
        raise ValidationError("row weights must have one entry per row")

    total_w = 0.0
    acc = 0.0
    for i in range(n):
        pm, qm = p[i].sum(), q[i].sum()
        if pm == 0 and qm == 0:
            continue
        if pm == 0 or qm == 0:
            d = 1.0
        else:
            d = _jsd_base2(p[i] / pm, q[i] / qm)
        acc += weights[i] * d
        total_w += weights[i]
    if total_w == 0:
        raise ValidationError("no supported rows to compare")
    return acc / total_w


def _offdiag(m: np.ndarray) -> np.ndarray:
    mask = ~np.eye(m.shape[0], dtype=bool)
    return m[mask]


def flow_spearman(p: np.ndarray, q: np.ndarray) -> float:
    """Spearman rank correlation over flattened off-diagonal masses; ties get
    average ranks. Returns NaN when either flattened vector is constant."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2:
        raise ValidationError("flow_spearman expects two conformable matrices")
    a, b = _offdiag(p), _offdiag(q)
    if np.all(a == a[0]) or np.all(b == b[0]):
        logger.warning("flow_spearman undefined on a constant flow vector")
        return float("nan")
    return float(stats.spearmanr(a, b).statistic)


def wasserstein1(
    a_values: np.ndarray,
    b_values: np.ndarray,
    a_weights: np.ndarray | None = None,
    b_weights: np.ndarray | None = None,
) -> float:
    """Exact 1-D W1 via the sorted-sample/quantile (CDF difference) method."""
    a_values = np.asarray(a_values, dtype=float)
    b_values = np.asarray(b_values, dtype=float)
    if a_values.size == 0 or b_values.size == 0:
        raise ValidationError("empty sample set")
    a_w = np.ones_like(a_values) if a_weights is None else np.asarray(a_weights, dtype=float)
    b_w = np.ones_like(b_values) if b_weights is None else np.asarray(b_weights, dtype=float)
    if a_w.sum() <= 0 or b_w.sum() <= 0:
        raise ValidationError("sample weights must have positive mass")

    positions = np.sort(np.unique(np.concatenate([a_values, b_values])))
    if positions.size == 1:
        return 0.0
    deltas = np.diff(positions)

    def cdf(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
        order = np.argsort(values, kind="stable")
        sorted_vals = values[order]
        cum = np.cumsum(weights[order]) / weights.sum()
        idx = np.searchsorted(sorted_vals, positions[:-1], side="right")
        return np.where(idx > 0, cum[np.minimum(idx - 1, cum.size - 1)], 0.0) * (idx > 0)

    return float(np.sum(np.abs(cdf(a_values, a_w) - cdf(b_values, b_w)) * deltas))


def hop_distances_km(
    sequences: list[list[int]], dmatrix: DistanceMatrix, include_zero_hops: bool = True
) -> np.ndarray:
    """Consecutive-ward hop distances over a set of ward-index sequences.

    Within-ward hops contribute zero kilometers by default; set
    ``include_zero_hops=False`` to drop them.
    """
    km = dmatrix.km
    hops = [
        km[a, b]
        for seq in sequences
        for a, b in zip(seq, seq[1:])
        if include_zero_hops or a != b
    ]
    if not hops:
        raise ValidationError("no hops in the given sequences")
    return np.array(hops)


def distance_w1(
    seq_a: list[list[int]],
    seq_b: list[list[int]],
    dmatrix: DistanceMatrix,
    include_zero_hops: bool = True,
) -> float:
    """W1 distance in km between the hop-distance distributions of two
    sequence sets."""
    return wasserstein1(
        hop_distances_km(seq_a, dmatrix, include_zero_hops),
        hop_distances_km(seq_b, dmatrix, include_zero_hops),
    )


def w1_from_matrices(
    p_ref: np.ndarray, p_gen: np.ndarray, dmatrix: DistanceMatrix
) -> float:
    """Hop-distance W1 where each matrix's off-diagonal mass weights the
    corresponding inter-ward distance."""
    km = dmatrix.km
    mask = ~np.eye(km.shape[0], dtype=bool)
    ref_mass = np.asarray(p_ref, dtype=float)[mask]
    gen_mass = np.asarray(p_gen, dtype=float)[mask]
    if ref_mass.sum() <= 0 or gen_mass.sum() <= 0:
        raise ValidationError("matrices carry no off-diagonal mass")
    values = km[mask]
    return wasserstein1(values, values, ref_mass, gen_mass)


def topk_recall(p_ref: np.ndarray, p_gen: np.ndarray, k: int = 20) -> float:
    """Fraction of the k highest-mass reference edges (off-diagonal, ties by
    row-major edge index) that carry nonzero generated mass."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    p_ref = np.asarray(p_ref, dtype=float)
    p_gen = np.asarray(p_gen, dtype=float)
    if p_ref.shape != p_gen.shape or p_ref.ndim != 2:
        raise ValidationError("topk_recall expects two conformable matrices")
    n = p_ref.shape[0]
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and p_ref[i, j] > 0]
    if len(edges) < k:
        logger.warning("only %d nonzero reference edges; truncating k from %d", len(edges), k)
        k = len(edges)
    if k == 0:
        raise ValidationError("reference matrix has no nonzero off-diagonal edges")
    edges.sort(key=lambda e: (-p_ref[e], e[0] * n + e[1]))
    top = edges[:k]
    return sum(1 for e in top if p_gen[e] > 0) / k


def mass_coverage(p_ref: np.ndarray, p_gen: np.ndarray) -> float:
    """Share of reference off-diagonal mass on edges the generated
    transitions also use."""
    p_ref = np.asarray(p_ref, dtype=float)
    p_gen = np.asarray(p_gen, dtype=float)
    if p_ref.shape != p_gen.shape or p_ref.ndim != 2:
        raise ValidationError("mass_coverage expects two conformable matrices")
    mask = ~np.eye(p_ref.shape[0], dtype=bool)
    ref = p_ref[mask]
    gen = p_gen[mask]
    total = ref.sum()
    if total == 0:
        return 1.0
    return float(ref[gen > 0].sum() / total)


@dataclass
class TransitionReport:
    row_jsd: float
    flow_spearman: float
    distance_w1_km: float
    topk_recall: float
    mass_coverage: float
    k: int = 20

    def __post_init__(self):
        if not (np.isnan(self.row_jsd) or 0.0 <= self.row_jsd <= 1.0 + 1e-12):
            raise ValidationError(f"row_jsd {self.row_jsd} outside [0, 1]")
        if not (np.isnan(self.flow_spearman) or -1.0 - 1e-12 <= self.flow_spearman <= 1.0 + 1e-12):
            raise ValidationError(f"flow_spearman {self.flow_spearman} outside [-1, 1]")
        if self.distance_w1_km < 0:
            raise ValidationError("distance W1 must be non-negative")
        for name in ("topk_recall", "mass_coverage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} {v} outside [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "row_jsd": self.row_jsd,
            "flow_spearman": self.flow_spearman,
            "distance_w1_km": self.distance_w1_km,
            f"top{self.k}_recall": self.topk_recall,
            "mass_coverage": self.mass_coverage,
        }


def transition_report(
    p_ref: np.ndarray,
    p_gen: np.ndarray,
    dmatrix: DistanceMatrix,
    ref_row_weights: np.ndarray | None = None,
    k: int = 20,
) -> TransitionReport:
    """Compute the full transition metric row against a reference matrix."""
    return TransitionReport(
        row_jsd=row_jsd(p_ref, p_gen, ref_row_weights),
        flow_spearman=flow_spearman(p_ref, p_gen),
        distance_w1_km=w1_from_matrices(p_ref, p_gen, dmatrix),
        topk_recall=topk_recall(p_ref, p_gen, k),
        mass_coverage=mass_coverage(p_ref, p_gen),
        k=k,
    )


# ---------------------------------------------------------------------------
# Chain consistency


@dataclass
class ConsistencyReport:
    """Chain-level pass rates of the four structural checks."""

    n_chains: int
    day_coverage_rate: float
    ward_adherence_rate: float
    night_alignment_rate: float
    hallucination_rate: float

    def to_json_dict(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "day_coverage_rate": self.day_coverage_rate,
            "ward_adherence_rate": self.ward_adherence_rate,
            "night_alignment_rate": self.night_alignment_rate,
            "hallucination_rate": self.hallucination_rate,
        }


def consistency_report(
    chains: list[ActivityChain],
    itineraries: list[WardItinerary],
    scopes: dict[str, TripScope] | None = None,
) -> ConsistencyReport:
    """Aggregate per-chain validation into population rates.

    A chain passes ward adherence only when every in-range episode sits in
    its day's assigned ward list; hallucination counts chains containing any
    out-of-vocabulary reference. Chain and itinerary agent sets must match.
    """
    its = {it.agent_id: it for it in itineraries}
    chain_ids = {c.agent_id for c in chains}
    missing = sorted(set(its) ^ chain_ids)
    if missing:
        raise ValidationError(f"chain/itinerary agent sets differ; mismatched ids: {missing[:10]}")
    if scopes is not None:
        for it in itineraries:
            s = scopes.get(it.agent_id)
            if s is not None and len(it.days) != s.nights + 1:
                raise ValidationError(
                    f"{it.agent_id}: itinerary day count {len(it.days)} "
                    f"inconsistent with scope nights {s.nights}"
                )

    n = len(chains)
    if n == 0:
        raise ValidationError("no chains to evaluate")
    coverage = adherence = alignment = hallucination = 0
    for chain in chains:
        diag = validate_chain(chain, its[chain.agent_id])
        coverage += diag.day_coverage
        adherence += diag.ward_adherence == 1.0
        alignment += diag.night_alignment
        hallucination += diag.hallucination
    return ConsistencyReport(
        n_chains=n,
        day_coverage_rate=coverage / n,
        ward_adherence_rate=adherence / n,
        night_alignment_rate=alignment / n,
        hallucination_rate=hallucination / n,
    )


def save_json_report(report, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
