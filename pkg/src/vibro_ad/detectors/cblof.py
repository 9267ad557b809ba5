"""Cluster-based local outlier factor on top of a seeded k-means."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidConfig
from .base import Model, register


def kmeans_pp_init(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
        else:
            centers.append(x[rng.choice(n, p=d2 / total)])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, k, rng, n_init=10, max_iter=300, tol=1e-8):
    """Lloyd iterations from k-means++ seeds; returns (centers, labels, inertia)."""
    best = None
    for _ in range(n_init):
        centers = kmeans_pp_init(x, k, rng)
        for _ in range(max_iter):
            d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = np.argmin(d2, axis=1)
            new = centers.copy()
            for j in range(k):
                members = x[labels == j]
                if len(members):
                    new[j] = members.mean(axis=0)
                else:
                    # re-seed an empty cluster at the worst-fit point
                    far = int(np.argmax(d2[np.arange(len(x)), labels]))
                    new[j] = x[far]
            shift = np.sum((new - centers) ** 2)
            centers = new
            if shift <= tol:
                break
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(len(x)), labels].sum())
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    return best


def partition_clusters(sizes, alpha: float, beta: float) -> np.ndarray:
    """Boolean mask of "large" clusters.

    Clusters are ranked by size (descending). The boundary b is the first
    rank at which the cumulative size reaches ``alpha * N`` or the size ratio
    to the next cluster reaches ``beta``; ranks up to b are large. With no
    boundary, every cluster is large.
    """
    sizes = np.asarray(sizes, dtype=float)
    order = np.argsort(-sizes, kind="stable")
    s = sizes[order]
    total = s.sum()
    n_large = len(s)
    for b in range(1, len(s)):
        ratio = np.inf if s[b] == 0 else s[b - 1] / s[b]
        if s[:b].sum() >= alpha * total or ratio >= beta:
            n_large = b
            break
    large = np.zeros(len(s), dtype=bool)
    large[order[:n_large]] = True
    return large


@register
class CBLOF(Model):
    """Cluster size times distance to the own (large) or nearest large centroid."""

    name = "CBLOF"
    defaults = {"n_clusters": 6, "alpha": 0.8, "beta": 4.0, "n_init": 10}
    stochastic = True
    _state_fields = ("centers_", "sizes_", "large_")

    def _check_params(self):
        p = self.params
        if int(p["n_clusters"]) < 2:
            raise InvalidConfig("params.n_clusters: must be >= 2")
        if not 0.0 < p["alpha"] < 1.0:
            raise InvalidConfig("params.alpha: must lie in (0, 1)")
        if p["beta"] <= 1.0:
            raise InvalidConfig("params.beta: must be > 1")

    def min_rows(self, n_features):
        return int(self.params["n_clusters"])

    def _fit(self, x):
        n_distinct = len(np.unique(x, axis=0))
        k = min(int(self.params["n_clusters"]), n_distinct)
        rng = np.random.default_rng(self.seed)
        if k == 1:
            centers, labels = x.mean(axis=0, keepdims=True), np.zeros(len(x), dtype=int)
        else:
            centers, labels, _ = kmeans(x, k, rng, n_init=int(self.params["n_init"]))
        self.set_clusters(centers, np.bincount(labels, minlength=len(centers)))
        self.train_scores_ = self.score_samples(x)

    def set_clusters(self, centers, sizes):
        self.centers_ = np.asarray(centers, dtype=float)
        self.sizes_ = np.asarray(sizes, dtype=float)
        self.large_ = partition_clusters(self.sizes_, self.params["alpha"], self.params["beta"])

    def score_samples(self, x):
        x = np.atleast_2d(x)
        d = np.sqrt(((x[:, None, :] - self.centers_[None, :, :]) ** 2).sum(axis=2))
        own = np.argmin(d, axis=1)
        rows = np.arange(len(x))
        to_large = d[:, self.large_].min(axis=1)
        dist = np.where(self.large_[own], d[rows, own], to_large)
        return self.sizes_[own] * dist
