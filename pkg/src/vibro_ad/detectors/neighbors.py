"""Exact k-nearest-neighbour queries (exhaustive scan or KD-tree)."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist


def pairwise_distances(a: np.ndarray, b: np.ndarray, p: float = 2.0) -> np.ndarray:
    if p == 2.0:
        return cdist(a, b, "euclidean")
    return cdist(a, b, "minkowski", p=p)


def kneighbors(
    train: np.ndarray,
    query: np.ndarray,
    k: int,
    *,
    p: float = 2.0,
    exclude_self: bool = False,
    algorithm: str = "brute",
) -> tuple[np.ndarray, np.ndarray]:
    """Distances and indices of the k nearest training rows, ascending.

    With ``exclude_self`` the query must be ``train`` itself and row i never
    counts as its own neighbour (duplicates of row i still do). Ties are
    broken by training-row index.
    """
    n = train.shape[0]
    need = k + 1 if exclude_self else k
    if need > n:
        raise ValueError(f"k={k} needs at least {need} training rows, have {n}")
    if algorithm == "kd_tree":
        tree = cKDTree(train)
        dist, idx = tree.query(query, k=need, p=p)
        dist = np.asarray(dist).reshape(query.shape[0], need)
        idx = np.asarray(idx).reshape(query.shape[0], need)
        if exclude_self:
            dist, idx = _drop_self(dist, idx, k)
        return dist, idx
    if algorithm != "brute":
        raise ValueError(f"unknown neighbour algorithm {algorithm!r}")
    d = pairwise_distances(query, train, p)
    if exclude_self:
        np.fill_diagonal(d, np.inf)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(d, idx, axis=1), idx


def _drop_self(dist, idx, k):
    rows = np.arange(idx.shape[0])[:, None]
    keep = idx != rows
    # when a duplicate occupies slot 0 instead of the row itself, drop the extra last slot
    out_d = np.empty((idx.shape[0], k))
    out_i = np.empty((idx.shape[0], k), dtype=idx.dtype)
    for r in range(idx.shape[0]):
        kd, ki = dist[r][keep[r]][:k], idx[r][keep[r]][:k]
        out_d[r], out_i[r] = kd, ki
    return out_d, out_i
