import numpy as np
import pytest
from hypothesis import given, strategies as st

from toursynth.errors import ValidationError
from toursynth.scope import (
    LOCATIONS_MAX,
    NIGHTS_MAX,
    FeatureSchema,
    MultinomialLogit,
    ScopeModel,
    TripScope,
    blend_distributions,
    blended_sample,
    bucket,
    bucket_key_str,
    cross_entropy_grad,
    cross_entropy_loss,
    train,
)
from .conftest import make_profile


def make_schema():
    return FeatureSchema(
        genders=["female", "male"],
        purposes=["Business", "Sightseeing"],
        companions=["alone", "couple"],
        age_mean=40.0,
        age_std=10.0,
    )


# ---------------------------------------------------------------------------
# encoding


def test_encode_deterministic():
    schema = make_schema()
    p = make_profile(purpose="Business", companion="couple")
    np.testing.assert_array_equal(schema.encode(p), schema.encode(p))


def test_encode_age_at_mean_is_zero():
    schema = make_schema()
    x = schema.encode(make_profile(age=40, purpose="Business", companion="alone"))
    assert x[schema._age_pos] == 0.0


def test_encode_matches_manual_layout():
    schema = make_schema()
    p = make_profile(
        gender="male", age=50, purpose="Sightseeing", companion="alone",
        expenditure_percentile=75.0, household_role="head",
    )
    # [female, male, age_z, Business, Sightseeing, pct, alone, couple, head]
    expected = np.array([0, 1, 1.0, 0, 1, 0.75, 1, 0, 1], dtype=float)
    np.testing.assert_allclose(schema.encode(p), expected)


def test_encode_unknown_level_names_it():
    schema = make_schema()
    with pytest.raises(ValidationError, match="Visiting relatives"):
        schema.encode(make_profile(purpose="Visiting relatives"))


def test_schema_round_trip():
    schema = make_schema()
    restored = FeatureSchema.from_json_dict(schema.to_json_dict())
    p = make_profile(purpose="Business", companion="couple")
    np.testing.assert_array_equal(schema.encode(p), restored.encode(p))


# ---------------------------------------------------------------------------
# reference classifier


def test_single_class_training_concentrates():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 4))
    y = np.full(60, 3)
    clf = MultinomialLogit(n_classes=6, learning_rate=0.5, n_iter=400).fit(x, y)
    probs = clf.predict_proba(x[0])
    assert probs[3] >= 0.99
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_loss_decreases_monotonically_with_small_steps():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(80, 5))
    y = rng.integers(0, 4, size=80)
    clf = MultinomialLogit(n_classes=4, learning_rate=0.01, n_iter=300).fit(x, y)
    diffs = np.diff(clf.loss_history)
    assert np.all(diffs <= 1e-12)


def test_gradient_matches_central_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 3))
    xb = MultinomialLogit._with_bias(x)
    y = rng.integers(0, 5, size=30)
    w = rng.normal(scale=0.5, size=(4, 5))
    grad = cross_entropy_grad(w, xb, y)
    eps = 1e-6
    for idx in [(0, 0), (1, 2), (3, 4), (2, 1)]:
        w_hi, w_lo = w.copy(), w.copy()
        w_hi[idx] += eps
        w_lo[idx] -= eps
        numeric = (cross_entropy_loss(w_hi, xb, y) - cross_entropy_loss(w_lo, xb, y)) / (2 * eps)
        assert grad[idx] == pytest.approx(numeric, rel=1e-4)


def test_fit_rejects_empty_and_bad_labels():
    with pytest.raises(ValidationError):
        MultinomialLogit(3).fit(np.empty((0, 2)), np.array([], dtype=int))
    with pytest.raises(ValidationError):
        MultinomialLogit(3).fit(np.zeros((2, 2)), np.array([0, 3]))


# ---------------------------------------------------------------------------
# bucketing


def test_bucket_ignores_companion():
    schema = make_schema()
    a = make_profile(companion="alone", purpose="Business")
    b = make_profile(companion="couple", purpose="Business")
    assert bucket(schema.encode(a), schema) == bucket(schema.encode(b), schema)


def test_bucket_key_fields():
    schema = make_schema()
    x = schema.encode(make_profile(
        gender="male", age=52, purpose="Business", companion="alone", expenditure_percentile=80.0
    ))
    assert bucket(x, schema) == ("Business", "male", "50p", 3)


def test_bucket_cardinality_bound():
    schema = make_schema()
    rng = np.random.default_rng(4)
    keys = set()
    for _ in range(500):
        p = make_profile(
            gender=["female", "male"][int(rng.integers(2))],
            age=int(rng.integers(18, 85)),
            purpose=["Business", "Sightseeing"][int(rng.integers(2))],
            companion=["alone", "couple"][int(rng.integers(2))],
            expenditure_percentile=float(rng.uniform(0, 100)),
        )
        keys.add(bucket(schema.encode(p), schema))
    assert len(keys) <= 2 * 2 * 3 * 4


def test_bucket_counts_match_grouping_oracle():
    schema = make_schema()
    rng = np.random.default_rng(9)
    profiles = [
        make_profile(
            gender=["female", "male"][int(rng.integers(2))],
            age=int(rng.integers(18, 85)),
            purpose=["Business", "Sightseeing"][int(rng.integers(2))],
            expenditure_percentile=float(rng.uniform(0, 100)),
        )
        for _ in range(300)
    ]
    got = {}
    for p in profiles:
        key = bucket(schema.encode(p), schema)
        got[key] = got.get(key, 0) + 1

    def band(age):
        return "u30" if age < 30 else ("30-49" if age < 50 else "50p")

    expected = {}
    for p in profiles:
        key = (p.purpose, p.gender, band(p.age), min(3, int(p.expenditure_percentile / 100.0 * 4)))
        expected[key] = expected.get(key, 0) + 1
    assert got == expected


# ---------------------------------------------------------------------------
# blending


def test_blend_alpha_one_is_pure_model():
    p_model = np.array([0.2, 0.5, 0.3])
    p_prior = np.array([0.6, 0.2, 0.2])
    np.testing.assert_allclose(blend_distributions(p_model, p_prior, 1.0), p_model, atol=1e-15)


def test_blend_arithmetic():
    out = blend_distributions(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.7)
    np.testing.assert_allclose(out, [0.7, 0.3], atol=1e-15)


@given(
    st.integers(2, 8),
    st.floats(0.0, 1.0),
    st.integers(0, 2**32 - 1),
)
def test_blend_is_valid_distribution(k, alpha, seed):
    rng = np.random.default_rng(seed)
    p = rng.random(k) + 1e-12
    q = rng.random(k) + 1e-12
    p /= p.sum()
    q /= q.sum()
    out = blend_distributions(p, q, alpha)
    assert np.all(out >= 0)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    # tail preservation: prior-supported classes stay reachable for alpha < 1
    if alpha < 1.0:
        assert np.all(out[q > 0] > 0)


def _toy_model(alpha=0.7):
    rng = np.random.default_rng(7)
    profiles = []
    labeled = []
    for i in range(400):
        p = make_profile(
            agent_id=f"t{i:05d}",
            gender=["female", "male"][int(rng.integers(2))],
            age=int(rng.integers(20, 70)),
            purpose=["Business", "Sightseeing"][int(rng.integers(2))],
            companion="alone",
            expenditure_percentile=float(rng.uniform(0, 100)),
        )
        nights = int(rng.integers(0, 5)) if p.purpose == "Business" else int(rng.integers(2, 9))
        locs = int(rng.integers(1, 5)) if p.purpose == "Business" else int(rng.integers(3, 10))
        profiles.append(p)
        labeled.append((p, nights, locs))
    return train(labeled, alpha=alpha, n_iter=250)


def test_blended_sample_deterministic_and_in_range():
    model = _toy_model()
    x = model.schema.encode(make_profile(purpose="Business", companion="alone"))
    a = blended_sample(x, model, np.random.default_rng(5))
    b = blended_sample(x, model, np.random.default_rng(5))
    assert a == b
    assert 0 <= a.nights <= NIGHTS_MAX
    assert 1 <= a.locations <= LOCATIONS_MAX


def test_missing_bucket_falls_back_to_pure_model(caplog):
    model = _toy_model()
    model.bucket_nights.clear()
    model.bucket_locs.clear()
    x = model.schema.encode(make_profile(purpose="Business"))
    with caplog.at_level("WARNING"):
        s = blended_sample(x, model, np.random.default_rng(1))
    assert isinstance(s, TripScope)
    assert any("bucket" in r.message for r in caplog.records)


def test_bucket_priors_are_rows_summing_to_one():
    model = _toy_model()
    for table in (model.bucket_nights, model.bucket_locs):
        assert table
        for row in table.values():
            assert row.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(row > 0)  # add-one smoothing keeps every class reachable


def test_labels_above_cap_clamp_into_top_class():
    p = make_profile()
    model = train([(p, 40, 40)], n_iter=10)
    probs = model.nights_clf.predict_proba(model.schema.encode(p))
    assert probs.argmax() == NIGHTS_MAX
    probs = model.locs_clf.predict_proba(model.schema.encode(p))
    assert probs.argmax() == LOCATIONS_MAX - 1


def test_empty_training_set_rejected():
    with pytest.raises(ValidationError):
        train([])


def test_model_round_trip(tmp_path):
    model = _toy_model()
    path = tmp_path / "model.json"
    model.save(str(path))
    loaded = ScopeModel.load(str(path))
    x = model.schema.encode(make_profile(purpose="Sightseeing"))
    np.testing.assert_allclose(
        loaded.nights_clf.predict_proba(x), model.nights_clf.predict_proba(x), atol=1e-12
    )
    assert loaded.alpha == model.alpha
    assert sorted(loaded.bucket_nights) == sorted(model.bucket_nights)


def test_blended_sampling_frequencies_match_blend():
    model = _toy_model()
    x = model.schema.encode(
        make_profile(purpose="Sightseeing", companion="alone", age=30, expenditure_percentile=50.0)
    )
    key = bucket_key_str(bucket(x, model.schema))
    p_blend = blend_distributions(
        model.nights_clf.predict_proba(x), model.bucket_nights[key], model.alpha
    )
    rng = np.random.default_rng(99)
    n = 20_000
    draws = np.array([blended_sample(x, model, rng).nights for _ in range(n)])
    for cls in range(NIGHTS_MAX + 1):
        p = p_blend[cls]
        se = np.sqrt(p * (1 - p) / n)
        assert abs((draws == cls).mean() - p) <= 3 * se + 1e-9
