"""Fit/score contract shared by every detector.

Scores are oriented so that larger means more anomalous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from ..errors import (
    EmptyEnsemble,
    InsufficientData,
    InvalidConfig,
    InvalidContamination,
)
from ..features import FeatureTable, FeatureVector, ScalingParams

REGISTRY: dict[str, type["Model"]] = {}


def register(cls):
    REGISTRY[cls.name] = cls
    return cls


class Model:
    """One anomaly-detection algorithm working on a numeric matrix.

    Subclasses set ``name``, ``defaults`` and ``standardize`` and implement
    ``_fit`` (which must leave ``train_scores_`` populated) and
    ``score_samples``. ``_state_fields`` lists the fitted attributes needed
    to rebuild the model without refitting.
    """

    name: ClassVar[str] = ""
    defaults: ClassVar[dict] = {}
    standardize: ClassVar[bool] = True
    stochastic: ClassVar[bool] = False
    _state_fields: ClassVar[tuple[str, ...]] = ()

    def __init__(self, seed: int = 0, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise InvalidConfig(f"params: unknown {self.name} parameter(s) {sorted(unknown)}")
        self.params = {**self.defaults, **params}
        self.seed = int(seed)
        self.train_scores_: np.ndarray | None = None
        self._check_params()

    def _check_params(self) -> None:
        pass

    def min_rows(self, n_features: int) -> int:
        return 1

    def fit(self, x: np.ndarray) -> "Model":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise InsufficientData(f"{self.name}: training matrix is empty")
        need = self.min_rows(x.shape[1])
        if x.shape[0] < need:
            raise InsufficientData(f"{self.name} needs at least {need} training rows, got {x.shape[0]}")
        self._fit(x)
        assert self.train_scores_ is not None
        return self

    def _fit(self, x: np.ndarray) -> None:
        raise NotImplementedError

    def score_samples(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def get_state(self) -> dict:
        state = {k: getattr(self, k) for k in self._state_fields}
        state["train_scores_"] = self.train_scores_
        return state

    def set_state(self, state: dict) -> None:
        for k, v in state.items():
            setattr(self, k, v)


# ---------------------------------------------------------------------------
# configuration


ALIASES = {name.lower(): name for name in (
    "kNN", "MCD", "LOF", "CBLOF", "OCSVM", "FB", "FastABOD", "IF", "HBOS", "LODA", "Ensemble",
)}
ALIASES.update({"iforest": "IF", "isolation_forest": "IF", "abod": "FastABOD", "fast_abod": "FastABOD",
                "knn": "kNN", "ocsvm": "OCSVM", "feature_bagging": "FB"})


def canonical_algorithm(name: str) -> str:
    try:
        return ALIASES[str(name).lower()]
    except KeyError:
        raise InvalidConfig(f"algorithm: unknown detector {name!r}; choose from {sorted(set(ALIASES.values()))}") from None


@dataclass(frozen=True)
class DetectorConfig:
    """Algorithm id, its hyperparameters and the seed for stochastic parts.

    ``standardize=None`` picks the algorithm default (z-scoring for every
    detector except IF and HBOS).
    """

    algorithm: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    standardize: bool | None = None

    def __post_init__(self):
        from . import _load_all  # noqa: F401  (populates REGISTRY)

        algo = canonical_algorithm(self.algorithm)
        object.__setattr__(self, "algorithm", algo)
        cls = REGISTRY[algo]
        params = dict(self.params or {})
        unknown = set(params) - set(cls.defaults)
        if unknown:
            raise InvalidConfig(f"params: unknown {algo} parameter(s) {sorted(unknown)}")
        object.__setattr__(self, "params", {**cls.defaults, **params})
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidConfig(f"seed: must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def model_class(self) -> type[Model]:
        return REGISTRY[self.algorithm]

    @property
    def uses_standardization(self) -> bool:
        return self.model_class.standardize if self.standardize is None else bool(self.standardize)

    def with_params(self, **params) -> "DetectorConfig":
        return DetectorConfig(self.algorithm, {**self.params, **params}, self.seed, self.standardize)

    def with_seed(self, seed: int) -> "DetectorConfig":
        return DetectorConfig(self.algorithm, self.params, seed, self.standardize)

    def to_dict(self) -> dict:
        out = {"algorithm": self.algorithm, "params": _jsonable(self.params), "seed": self.seed}
        if self.standardize is not None:
            out["standardize"] = self.standardize
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        if not isinstance(d, dict):
            raise InvalidConfig("detector config must be a JSON object")
        if "algorithm" not in d:
            raise InvalidConfig("algorithm: missing")
        extra = set(d) - {"algorithm", "params", "seed", "standardize"}
        if extra:
            raise InvalidConfig(f"{sorted(extra)[0]}: unknown config field")
        return cls(d["algorithm"], d.get("params") or {}, d.get("seed", 0), d.get("standardize"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "DetectorConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config: {exc}") from None


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# fitted detector


@dataclass(frozen=True, eq=False)
class FittedDetector:
    """Immutable trained detector working in raw feature units."""

    config: DetectorConfig
    feature_names: tuple[str, ...]
    scaling: ScalingParams
    model: Model
    train_matrix: np.ndarray
    train_scores: np.ndarray

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    def score_samples(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {x.shape[1]}")
        return self.model.score_samples(self.scaling.apply(x))

    def score(self, x: FeatureVector | np.ndarray) -> float:
        if isinstance(x, FeatureVector):
            if x.names != self.feature_names:
                raise ValueError("feature vector does not match the detector's features")
            x = x.values
        return float(self.score_samples(np.asarray(x)[None, :])[0])

    @property
    def train_min(self) -> float:
        return float(self.train_scores.min())

    @property
    def train_max(self) -> float:
        return float(self.train_scores.max())


def fit(config: DetectorConfig, train: FeatureTable | np.ndarray, feature_names=None) -> FittedDetector:
    """Train ``config`` on ``train``; deterministic given (config, train)."""
    if isinstance(train, FeatureTable):
        names, x = train.names, train.values
    else:
        x = np.atleast_2d(np.asarray(train, dtype=np.float64))
        names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))
    if x.shape[0] == 0:
        raise InsufficientData("training table is empty")
    x = np.array(x, dtype=np.float64)
    x.flags.writeable = False
    scaling = ScalingParams.fit(x) if config.uses_standardization else ScalingParams.identity(x.shape[1])
    model = config.model_class(seed=config.seed, **config.params)
    model.fit(scaling.apply(x))
    scores = np.array(model.train_scores_, dtype=np.float64)
    scores.flags.writeable = False
    return FittedDetector(config, tuple(names), scaling, model, x, scores)


# ---------------------------------------------------------------------------
# thresholds and decisions


@dataclass(frozen=True)
class ThresholdRule:
    """``max_train`` (training set assumed clean) or ``contamination``."""

    kind: str = "max_train"
    contamination: float | None = None
    margin: float = 0.0

    def __post_init__(self):
        if self.kind not in ("max_train", "contamination"):
            raise InvalidConfig(f"rule: unknown threshold rule {self.kind!r}")
        if self.kind == "contamination":
            c = self.contamination
            if c is None or not (0.0 < float(c) < 1.0):
                raise InvalidContamination(f"contamination must lie in (0, 1), got {c!r}")

    @classmethod
    def max_train(cls, margin: float = 0.0) -> "ThresholdRule":
        return cls("max_train", None, margin)

    @classmethod
    def of_contamination(cls, c: float) -> "ThresholdRule":
        return cls("contamination", c)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "contamination":
            d["contamination"] = self.contamination
        else:
            d["margin"] = self.margin
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRule":
        return cls(d.get("kind", "max_train"), d.get("contamination"), d.get("margin", 0.0))


def threshold_from_scores(scores: np.ndarray, rule: ThresholdRule) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if rule.kind == "max_train":
        top = float(scores.max())
        return top + rule.margin * abs(top)
    return float(np.quantile(scores, 1.0 - rule.contamination, method="linear"))


def threshold(f: FittedDetector, rule: ThresholdRule) -> float:
    """Score threshold derived from the detector's own training scores."""
    if f.algorithm == "Ensemble":
        # votes are thresholded per base model; the ensemble cut is the majority line
        return f.model.vote_threshold
    return threshold_from_scores(f.train_scores, rule)


@dataclass(frozen=True)
class ScoredSample:
    score: float
    normalized_score: float
    is_anomaly: bool
    threshold_used: float

    def to_dict(self) -> dict:
        return {"score": self.score, "normalized_score": self.normalized_score,
                "is_anomaly": self.is_anomaly, "threshold": self.threshold_used}


def normalize_score(f: FittedDetector, score: float) -> float:
    lo, hi = f.train_min, f.train_max
    if hi <= lo:
        return 0.0 if score <= lo else 1.0
    return float(min(1.0, max(0.0, (score - lo) / (hi - lo))))


def decide_score(f: FittedDetector, score: float, thr: float) -> ScoredSample:
    return ScoredSample(float(score), normalize_score(f, score), bool(score > thr), float(thr))


def decide(f: FittedDetector, x, thr: float) -> ScoredSample:
    return decide_score(f, f.score(x), thr)


def ensemble_decide(decisions) -> bool:
    """Majority vote: anomalous when more than half the votes say so."""
    votes = [bool(d) for d in decisions]
    if not votes:
        raise EmptyEnsemble("ensemble_decide needs at least one decision")
    return sum(votes) > len(votes) / 2
