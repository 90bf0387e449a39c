"""Stage 1: trip-scope prediction (nights stayed, visited-location count).

Demographics are one-hot encoded, two independent multi-class classifiers
produce per-class probabilities, and final values are sampled from a convex
blend of the classifier output and an empirical bucket prior so that
survey-supported tail values stay reachable.

The classifier is a pluggable interface; the reference implementation is a
multinomial logistic regression fit by full-batch gradient descent on the
cross-entropy objective. A gradient-boosted model can be dropped in through
the same ``fit``/``predict_proba`` surface.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import InputError, ValidationError
from .population import AgentProfile

logger = logging.getLogger(__name__)

NIGHTS_MAX = 14   # classes 0..14
LOCATIONS_MAX = 15  # classes 1..15
DEFAULT_ALPHA = 0.7

AGE_BANDS = ((0, 30, "u30"), (30, 50, "30-49"), (50, 1000, "50p"))


def age_band_label(age: float) -> str:
    for lo, hi, label in AGE_BANDS:
        if lo <= age < hi:
            return label
    raise ValidationError(f"age {age} outside supported bands")


@dataclass(frozen=True)
class TripScope:
    nights: int
    locations: int

    def __post_init__(self):
        if not 0 <= self.nights <= NIGHTS_MAX:
            raise ValidationError(f"nights {self.nights} outside [0, {NIGHTS_MAX}]")
        if not 1 <= self.locations <= LOCATIONS_MAX:
            raise ValidationError(f"locations {self.locations} outside [1, {LOCATIONS_MAX}]")


class FeatureSchema:
    """Fixed encoding layout: gender one-hot, standardized age, purpose
    one-hot, expenditure percentile in [0,1], companion one-hot, head flag.

    Standardization parameters are stored with the schema so encoding stays
    reproducible after persistence.
    """

    VERSION = 1

    def __init__(
        self,
        genders: list[str],
        purposes: list[str],
        companions: list[str],
        age_mean: float,
        age_std: float,
    ):
        if age_std <= 0:
            raise ValidationError("age std must be positive")
        self.genders = list(genders)
        self.purposes = list(purposes)
        self.companions = list(companions)
        self.age_mean = float(age_mean)
        self.age_std = float(age_std)
        self._gender_idx = {g: i for i, g in enumerate(self.genders)}
        self._purpose_idx = {p: i for i, p in enumerate(self.purposes)}
        self._companion_idx = {c: i for i, c in enumerate(self.companions)}
        ng, npu, nc = len(self.genders), len(self.purposes), len(self.companions)
        self._age_pos = ng
        self._purpose_pos = ng + 1
        self._pct_pos = ng + 1 + npu
        self._companion_pos = ng + 1 + npu + 1
        self._role_pos = ng + 1 + npu + 1 + nc
        self.dim = self._role_pos + 1

    @classmethod
    def fit(cls, profiles: list[AgentProfile]) -> "FeatureSchema":
        if not profiles:
            raise ValidationError("cannot fit a feature schema on an empty profile set")
        ages = np.array([p.age for p in profiles], dtype=float)
        std = float(ages.std())
        return cls(
            genders=sorted({p.gender for p in profiles}),
            purposes=sorted({p.purpose for p in profiles}),
            companions=sorted({p.companion for p in profiles}),
            age_mean=float(ages.mean()),
            age_std=std if std > 0 else 1.0,
        )

    def encode(self, profile: AgentProfile) -> np.ndarray:
        x = np.zeros(self.dim)
        for value, idx, offset, kind in (
            (profile.gender, self._gender_idx, 0, "gender"),
            (profile.purpose, self._purpose_idx, self._purpose_pos, "purpose"),
            (profile.companion, self._companion_idx, self._companion_pos, "companion"),
        ):
            if value not in idx:
                raise ValidationError(f"unknown {kind} level {value!r}")
            x[offset + idx[value]] = 1.0
        x[self._age_pos] = (profile.age - self.age_mean) / self.age_std
        x[self._pct_pos] = profile.expenditure_percentile / 100.0
        x[self._role_pos] = 1.0 if profile.household_role == "head" else 0.0
        return x

    def encode_many(self, profiles: list[AgentProfile]) -> np.ndarray:
        return np.stack([self.encode(p) for p in profiles])

    # Decoders used by the bucketing rule.
    def gender_of(self, x: np.ndarray) -> str:
        return self.genders[int(np.argmax(x[: len(self.genders)]))]

    def purpose_of(self, x: np.ndarray) -> str:
        block = x[self._purpose_pos : self._purpose_pos + len(self.purposes)]
        return self.purposes[int(np.argmax(block))]

    def age_of(self, x: np.ndarray) -> float:
        return x[self._age_pos] * self.age_std + self.age_mean

    def percentile_of(self, x: np.ndarray) -> float:
        return float(x[self._pct_pos])

    def to_json_dict(self) -> dict:
        return {
            "version": self.VERSION,
            "genders": self.genders,
            "purposes": self.purposes,
            "companions": self.companions,
            "age_mean": self.age_mean,
            "age_std": self.age_std,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FeatureSchema":
        if d.get("version") != cls.VERSION:
            raise InputError(f"unsupported feature schema version {d.get('version')}")
        return cls(d["genders"], d["purposes"], d["companions"], d["age_mean"], d["age_std"])


def bucket(x: np.ndarray, schema: FeatureSchema) -> tuple[str, str, str, int]:
    """Stratify the demographic space: purpose, gender, coarse age band,
    spending quartile."""
    pct = schema.percentile_of(x)
    quartile = min(3, int(pct * 4.0))
    return (schema.purpose_of(x), schema.gender_of(x), age_band_label(schema.age_of(x)), quartile)


def bucket_key_str(key: tuple[str, str, str, int]) -> str:
    return "|".join(str(k) for k in key)


# ---------------------------------------------------------------------------
# Classifier interface and the reference implementation


class Classifier(Protocol):
    """Anything with this surface can back a scope model; gradient-boosted
    implementations plug in through the same two methods."""

    n_classes: int

    def fit(self, x: np.ndarray, y: np.ndarray) -> "Classifier": ...

    def predict_proba(self, x: np.ndarray) -> np.ndarray: ...


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(weights: np.ndarray, xb: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood; ``xb`` carries the bias column."""
    probs = softmax(xb @ weights)
    return float(-np.log(probs[np.arange(len(y)), y] + 1e-300).mean())


def cross_entropy_grad(weights: np.ndarray, xb: np.ndarray, y: np.ndarray) -> np.ndarray:
    probs = softmax(xb @ weights)
    probs[np.arange(len(y)), y] -= 1.0
    return xb.T @ probs / len(y)


class MultinomialLogit:
    """Softmax classifier trained by full-batch gradient descent."""

    def __init__(self, n_classes: int, learning_rate: float = 0.2, n_iter: int = 800):
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.weights: np.ndarray | None = None  # (dim + 1, n_classes), bias first
        self.loss_history: list[float] = []

    @staticmethod
    def _with_bias(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.hstack([np.ones((x.shape[0], 1)), x])

    def fit(self, x: np.ndarray, y: np.ndarray) -> "MultinomialLogit":
        if len(x) == 0:
            raise ValidationError("empty training set")
        y = np.asarray(y, dtype=int)
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValidationError(f"labels outside [0, {self.n_classes})")
        xb = self._with_bias(np.asarray(x, dtype=float))
        w = np.zeros((xb.shape[1], self.n_classes))
        self.loss_history = [cross_entropy_loss(w, xb, y)]
        for _ in range(self.n_iter):
            w -= self.learning_rate * cross_entropy_grad(w, xb, y)
            self.loss_history.append(cross_entropy_loss(w, xb, y))
        self.weights = w
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.weights is None:
            raise ValidationError("classifier is not trained")
        probs = softmax(self._with_bias(x) @ self.weights)
        return probs[0] if np.asarray(x).ndim == 1 else probs

    def to_json_dict(self) -> dict:
        return {
            "kind": "multinomial_logit",
            "n_classes": self.n_classes,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MultinomialLogit":
        clf = cls(n_classes=d["n_classes"])
        clf.weights = np.array(d["weights"], dtype=float)
        return clf


# ---------------------------------------------------------------------------
# Scope model


@dataclass
class ScopeModel:
    """Two per-target classifiers plus the bucket prior table and blend weight.

    Nights classes are 0..NIGHTS_MAX; location classes are 1..LOCATIONS_MAX
    (stored internally as indices 0..LOCATIONS_MAX-1). Labels above a cap are
    clamped into the top class during training.
    """

    schema: FeatureSchema
    nights_clf: Classifier
    locs_clf: Classifier
    bucket_nights: dict[str, np.ndarray]
    bucket_locs: dict[str, np.ndarray]
    alpha: float = DEFAULT_ALPHA

    def save(self, path: str) -> None:
        for clf in (self.nights_clf, self.locs_clf):
            if not hasattr(clf, "to_json_dict"):
                raise ValidationError(
                    f"classifier {type(clf).__name__} does not support JSON persistence"
                )
        doc = {
            "schema": self.schema.to_json_dict(),
            "nights_clf": self.nights_clf.to_json_dict(),
            "locs_clf": self.locs_clf.to_json_dict(),
            "bucket_nights": {k: v.tolist() for k, v in sorted(self.bucket_nights.items())},
            "bucket_locs": {k: v.tolist() for k, v in sorted(self.bucket_locs.items())},
            "alpha": self.alpha,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "ScopeModel":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read scope model {path}: {exc}") from exc
        return cls(
            schema=FeatureSchema.from_json_dict(d["schema"]),
            nights_clf=MultinomialLogit.from_json_dict(d["nights_clf"]),
            locs_clf=MultinomialLogit.from_json_dict(d["locs_clf"]),
            bucket_nights={k: np.array(v) for k, v in d["bucket_nights"].items()},
            bucket_locs={k: np.array(v) for k, v in d["bucket_locs"].items()},
            alpha=d["alpha"],
        )


def _bucket_priors(
    keys: list[str], labels: np.ndarray, n_classes: int
) -> dict[str, np.ndarray]:
    """Empirical per-bucket class frequencies with add-one smoothing."""
    counts: dict[str, np.ndarray] = {}
    for key, y in zip(keys, labels):
        if key not in counts:
            counts[key] = np.zeros(n_classes)
        counts[key][y] += 1
    return {k: (c + 1.0) / (c + 1.0).sum() for k, c in counts.items()}


def train(
    labeled: list[tuple[AgentProfile, int, int]],
    schema: FeatureSchema | None = None,
    alpha: float = DEFAULT_ALPHA,
    learning_rate: float = 0.2,
    n_iter: int = 800,
    classifier_factory: Callable[[int], Classifier] | None = None,
) -> ScopeModel:
    """Fit both classifiers and the bucket prior table.

    ``labeled`` carries (profile, observed nights, observed location count).
    ``classifier_factory`` takes a class count and returns an untrained
    classifier; the default is the multinomial-logistic reference.
    """
    if not labeled:
        raise ValidationError("empty training set")
    profiles = [p for p, _, _ in labeled]
    if schema is None:
        schema = FeatureSchema.fit(profiles)
    if classifier_factory is None:
        classifier_factory = lambda k: MultinomialLogit(k, learning_rate, n_iter)
    x = schema.encode_many(profiles)
    y_nights = np.array([min(n, NIGHTS_MAX) for _, n, _ in labeled], dtype=int)
    y_locs = np.array([min(max(l, 1), LOCATIONS_MAX) - 1 for _, _, l in labeled], dtype=int)

    nights_clf = classifier_factory(NIGHTS_MAX + 1).fit(x, y_nights)
    locs_clf = classifier_factory(LOCATIONS_MAX).fit(x, y_locs)

    keys = [bucket_key_str(bucket(row, schema)) for row in x]
    return ScopeModel(
        schema=schema,
        nights_clf=nights_clf,
        locs_clf=locs_clf,
        bucket_nights=_bucket_priors(keys, y_nights, NIGHTS_MAX + 1),
        bucket_locs=_bucket_priors(keys, y_locs, LOCATIONS_MAX),
        alpha=alpha,
    )


def blend_distributions(p_model: np.ndarray, p_prior: np.ndarray, alpha: float) -> np.ndarray:
    """Convex blend of model and prior class distributions, renormalized
    against accumulated rounding drift."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    if p_model.shape != p_prior.shape:
        raise ValidationError("model and prior distributions are not conformable")
    p = alpha * p_model + (1.0 - alpha) * p_prior
    return p / p.sum()


def blended_sample(
    x: np.ndarray,
    model: ScopeModel,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> TripScope:
    """Sample nights and locations independently from their blended
    distributions. A bucket missing from the prior table falls back to the
    pure model (alpha = 1) with a warning."""
    a = model.alpha if alpha is None else alpha
    key = bucket_key_str(bucket(x, model.schema))
    p_nights = model.nights_clf.predict_proba(x)
    p_locs = model.locs_clf.predict_proba(x)
    if key in model.bucket_nights:
        p_nights = blend_distributions(p_nights, model.bucket_nights[key], a)
        p_locs = blend_distributions(p_locs, model.bucket_locs[key], a)
    else:
        logger.warning("bucket %s missing from prior table; using pure model output", key)
        p_nights = p_nights / p_nights.sum()
        p_locs = p_locs / p_locs.sum()
    nights = int(rng.choice(NIGHTS_MAX + 1, p=p_nights))
    locations = int(rng.choice(LOCATIONS_MAX, p=p_locs)) + 1
    return TripScope(nights=nights, locations=locations)


# ---------------------------------------------------------------------------
# File interfaces


def load_training_data(path: str) -> list[tuple[AgentProfile, int, int]]:
    """Read JSON-lines of {"profile": {...}, "nights": n, "locations": l}."""
    out = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    out.append(
                        (AgentProfile.from_json_dict(d["profile"]), int(d["nights"]), int(d["locations"]))
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: bad training record: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read training data {path}: {exc}") from exc
    return out


def save_scopes(scopes: dict[str, TripScope], path: str) -> None:
    with open(path, "w") as fh:
        for agent_id in sorted(scopes):
            s = scopes[agent_id]
            fh.write(json.dumps(
                {"agent_id": agent_id, "nights": s.nights, "locations": s.locations},
                sort_keys=True,
            ))
            fh.write("\n")


def load_scopes(path: str) -> dict[str, TripScope]:
    out: dict[str, TripScope] = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    d = json.loads(line)
                    out[d["agent_id"]] = TripScope(nights=int(d["nights"]), locations=int(d["locations"]))
                except (json.JSONDecodeError, KeyError, ValueError, ValidationError) as exc:
                    raise InputError(f"{path}:{lineno}: bad scope record: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read scope file {path}: {exc}") from exc
    return out
