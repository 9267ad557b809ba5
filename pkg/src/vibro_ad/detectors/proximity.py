"""Neighbourhood-based detectors: kNN distance, LOF, feature-bagged LOF, FastABOD."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateGeometry, InvalidConfig
from .base import Model, register
from .neighbors import kneighbors

# added to mean reachability distances so duplicate points keep a finite density
LRD_EPS = 1e-10


class _NeighborModel(Model):
    _state_fields = ("x_",)

    def _check_params(self):
        k = self.params["k"]
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise InvalidConfig(f"params.k: must be a positive integer, got {k!r}")

    def min_rows(self, n_features):
        return self.params["k"] + 1

    def _neighbors(self, x, exclude_self=False):
        return kneighbors(self.x_, x, self.params["k"], p=self.params.get("p", 2.0),
                          exclude_self=exclude_self, algorithm=self.params.get("algorithm", "brute"))


@register
class KNN(_NeighborModel):
    """Distance to the k-th nearest training row (or mean / median of the k)."""

    name = "kNN"
    defaults = {"k": 5, "method": "largest", "p": 2.0, "algorithm": "brute"}

    def _check_params(self):
        super()._check_params()
        if self.params["method"] not in ("largest", "mean", "median"):
            raise InvalidConfig(f"params.method: unknown kNN method {self.params['method']!r}")

    def _reduce(self, dist):
        method = self.params["method"]
        if method == "largest":
            return dist[:, -1]
        if method == "mean":
            return dist.mean(axis=1)
        return np.median(dist, axis=1)

    def _fit(self, x):
        self.x_ = x
        # training rows are scored leave-one-out
        dist, _ = self._neighbors(x, exclude_self=True)
        self.train_scores_ = self._reduce(dist)

    def score_samples(self, x):
        dist, _ = self._neighbors(np.atleast_2d(x))
        return self._reduce(dist)


@register
class LOF(_NeighborModel):
    """Local outlier factor: mean neighbour density over own density."""

    name = "LOF"
    defaults = {"k": 16, "p": 2.0, "algorithm": "brute"}
    _state_fields = ("x_", "k_distance_", "lrd_")

    def _fit(self, x):
        self.x_ = x
        dist, idx = self._neighbors(x, exclude_self=True)
        self.k_distance_ = dist[:, -1].copy()
        self.lrd_ = self._lrd(dist, idx)
        self.train_scores_ = self.lrd_[idx].mean(axis=1) / self.lrd_

    def _lrd(self, dist, idx):
        reach = np.maximum(self.k_distance_[idx], dist)
        return 1.0 / (reach.mean(axis=1) + LRD_EPS)

    def score_samples(self, x):
        dist, idx = self._neighbors(np.atleast_2d(x))
        lrd = self._lrd(dist, idx)
        return self.lrd_[idx].mean(axis=1) / lrd


@register
class FeatureBagging(Model):
    """LOF ensembles over random feature subsets.

    Each estimator sees ``ceil(max_features * d)`` features drawn without
    replacement; setting ``min_features`` (a fraction) draws the subset size
    uniformly between the two bounds instead.
    """

    name = "FB"
    defaults = {
        "base": "LOF",
        "n_estimators": 10,
        "max_features": 1.0,
        "min_features": None,
        "combination": "average",
        "n_neighbors": 10,
    }
    stochastic = True

    def _check_params(self):
        p = self.params
        if p["base"] != "LOF":
            raise InvalidConfig("params.base: only LOF base estimators are supported")
        if p["combination"] not in ("average", "max"):
            raise InvalidConfig(f"params.combination: must be 'average' or 'max', got {p['combination']!r}")
        if not (0.0 < float(p["max_features"]) <= 1.0):
            raise InvalidConfig("params.max_features: must lie in (0, 1]")
        if int(p["n_estimators"]) < 1:
            raise InvalidConfig("params.n_estimators: must be >= 1")

    def min_rows(self, n_features):
        return self.params["n_neighbors"] + 1

    def _subset_sizes(self, d, rng):
        hi = max(1, min(d, int(np.ceil(self.params["max_features"] * d - 1e-9))))
        lo_frac = self.params["min_features"]
        lo = hi if lo_frac is None else max(1, min(hi, int(np.ceil(lo_frac * d - 1e-9))))
        return [int(rng.integers(lo, hi + 1)) for _ in range(self.params["n_estimators"])]

    def _fit(self, x):
        d = x.shape[1]
        rng = np.random.default_rng(self.seed)
        self.subsets_ = []
        self.estimators_ = []
        for size in self._subset_sizes(d, rng):
            cols = np.sort(rng.choice(d, size=size, replace=False))
            est = LOF(k=self.params["n_neighbors"]).fit(x[:, cols])
            self.subsets_.append(cols)
            self.estimators_.append(est)
        self.train_scores_ = self.combine(np.array([e.train_scores_ for e in self.estimators_]))

    def combine(self, per_estimator: np.ndarray) -> np.ndarray:
        """Combine an (n_estimators, n_samples) score array."""
        if self.params["combination"] == "average":
            return per_estimator.mean(axis=0)
        return per_estimator.max(axis=0)

    def score_samples(self, x):
        x = np.atleast_2d(x)
        per = np.array([e.score_samples(x[:, cols]) for e, cols in zip(self.estimators_, self.subsets_)])
        return self.combine(per)

    def get_state(self):
        state = {"train_scores_": self.train_scores_, "n_est": len(self.estimators_)}
        for i, (e, cols) in enumerate(zip(self.estimators_, self.subsets_)):
            state[f"est{i}.cols"] = cols
            for k, v in e.get_state().items():
                state[f"est{i}.{k}"] = v
        return state

    def set_state(self, state):
        self.train_scores_ = state["train_scores_"]
        self.subsets_, self.estimators_ = [], []
        for i in range(int(state["n_est"])):
            est = LOF(k=self.params["n_neighbors"])
            prefix = f"est{i}."
            est.set_state({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix) and k != prefix + "cols"})
            self.subsets_.append(np.asarray(state[prefix + "cols"]))
            self.estimators_.append(est)


def abof_variance(a: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Distance-weighted variance of <AB,AC>/(|AB|^2 |AC|^2) over neighbour pairs.

    ``a`` is (n, d) and ``neighbors`` (n, k, d). Pairs touching a neighbour
    that coincides with A are skipped; rows left with no pair get NaN.
    """
    diff = neighbors - a[:, None, :]
    gram = np.einsum("nid,njd->nij", diff, diff)
    sq = np.einsum("nii->ni", gram)
    k = diff.shape[1]
    iu, ju = np.triu_indices(k, 1)
    sq_i, sq_j = sq[:, iu], sq[:, ju]
    valid = (sq_i > 0) & (sq_j > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = gram[:, iu, ju] / (sq_i * sq_j)
        weight = 1.0 / np.sqrt(sq_i * sq_j)
    weight = np.where(valid, weight, 0.0)
    value = np.where(valid, value, 0.0)
    wsum = weight.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = (weight * value).sum(axis=1) / wsum
        var = (weight * (value - mean[:, None]) ** 2).sum(axis=1) / wsum
    var[wsum == 0] = np.nan
    return var


@register
class FastABOD(_NeighborModel):
    """Angle-based outlier factor over the k nearest neighbours.

    The raw factor is small for outliers, so the score is its negation.
    """

    name = "FastABOD"
    defaults = {"k": 5, "p": 2.0, "algorithm": "brute"}

    def _scores(self, x, exclude_self):
        _, idx = self._neighbors(x, exclude_self=exclude_self)
        var = abof_variance(x, self.x_[idx])
        if np.isnan(var).any():
            bad = int(np.flatnonzero(np.isnan(var))[0])
            raise DegenerateGeometry(f"row {bad}: every neighbour coincides with the sample")
        return -var

    def _fit(self, x):
        self.x_ = x
        self.train_scores_ = self._scores(x, exclude_self=True)

    def score_samples(self, x):
        return self._scores(np.atleast_2d(x), exclude_self=False)
