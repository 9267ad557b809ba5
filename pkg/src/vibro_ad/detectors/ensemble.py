"""Majority-vote ensemble over the other detectors."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyEnsemble, InvalidConfig
from .base import (
    DetectorConfig,
    FittedDetector,
    Model,
    ThresholdRule,
    canonical_algorithm,
    fit,
    register,
    threshold,
)

BASE_ALGORITHMS = ("kNN", "MCD", "LOF", "CBLOF", "OCSVM", "FB", "FastABOD", "IF", "HBOS", "LODA")


@register
class Ensemble(Model):
    """Fraction of base detectors voting "anomaly".

    Each base is thresholded with ``rule`` on its own training scores. The
    ensemble flags a sample when more than half of the bases do, so its own
    threshold is fixed at 0.5 on the vote fraction.
    """

    name = "Ensemble"
    defaults = {"bases": list(BASE_ALGORITHMS), "base_params": {}, "rule": {"kind": "max_train"}}
    standardize = False
    stochastic = True
    vote_threshold = 0.5

    def _check_params(self):
        bases = self.params["bases"]
        if not bases:
            raise EmptyEnsemble("params.bases: the ensemble needs at least one base detector")
        names = [canonical_algorithm(b) for b in bases]
        if "Ensemble" in names:
            raise InvalidConfig("params.bases: ensembles cannot nest")
        self.params["bases"] = names
        self.rule = ThresholdRule.from_dict(self.params["rule"])

    def min_rows(self, n_features):
        return max(DetectorConfig(b).model_class(**DetectorConfig(b).params).min_rows(n_features)
                   for b in self.params["bases"])

    def _fit(self, x):
        names = tuple(f"f{i}" for i in range(x.shape[1]))
        self.members_: list[FittedDetector] = []
        for i, algo in enumerate(self.params["bases"]):
            cfg = DetectorConfig(algo, self.params["base_params"].get(algo, {}), seed=self.seed + i)
            self.members_.append(fit(cfg, x, names))
        self.thresholds_ = np.array([threshold(m, self.rule) for m in self.members_])
        votes = np.array([m.train_scores > t for m, t in zip(self.members_, self.thresholds_)])
        self.train_scores_ = votes.mean(axis=0)

    def member_votes(self, x) -> np.ndarray:
        """(n_members, n_samples) boolean votes."""
        x = np.atleast_2d(x)
        return np.array([m.score_samples(x) > t for m, t in zip(self.members_, self.thresholds_)])

    def score_samples(self, x):
        return self.member_votes(x).mean(axis=0)

    def get_state(self):
        from .serialize import dumps

        state = {"train_scores_": self.train_scores_, "thresholds_": self.thresholds_}
        for i, m in enumerate(self.members_):
            state[f"member{i}"] = np.frombuffer(dumps(m), dtype=np.uint8)
        return state

    def set_state(self, state):
        from .serialize import loads

        self.train_scores_ = state["train_scores_"]
        self.thresholds_ = state["thresholds_"]
        self.members_ = [loads(np.asarray(state[f"member{i}"]).tobytes()) for i in range(len(self.thresholds_))]
