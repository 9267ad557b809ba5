"""Isolation Forest with flat array trees.

Trees are stored as (n_trees, max_nodes) arrays so that building, scoring
and path walks run in compiled loops when numba is available; the same
functions run as plain Python otherwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from ..errors import InvalidConfig
from .base import Model, register

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

if os.environ.get("VIBRO_AD_DISABLE_JIT"):
    def njit(*args, **kwargs):  # noqa: F811
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

LEAF = -1


def average_path_length(n) -> np.ndarray:
    """c(n) = 2 H(n-1) - 2 (n-1) / n, with c(0) = c(1) = 0 and c(2) = 1."""
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    big = n > 1
    m = n[big]
    out[big] = 2.0 * (digamma(m) + np.euler_gamma) - 2.0 * (m - 1.0) / m
    return out


def height_limit(max_samples: int) -> int:
    return max(1, math.ceil(math.log2(max(max_samples, 2))))


@njit(cache=True)
def _build_tree(x, rows, limit, u_feat, u_thr, feature, threshold, left, right, size, depth):
    n_rows = rows.shape[0]
    d = x.shape[1]
    order = rows.copy()
    # explicit stack of (node, start, end)
    stack_node = np.empty(2 * n_rows + 2, dtype=np.int64)
    stack_start = np.empty(2 * n_rows + 2, dtype=np.int64)
    stack_end = np.empty(2 * n_rows + 2, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_rows
    top = 1
    n_nodes = 1
    depth[0] = 0
    lo = np.empty(d)
    hi = np.empty(d)
    cand = np.empty(d, dtype=np.int64)
    draw = 0
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        count = end - start
        size[node] = count
        feature[node] = -1
        if count <= 1 or depth[node] >= limit:
            continue
        for f in range(d):
            lo[f] = np.inf
            hi[f] = -np.inf
        for r in range(start, end):
            for f in range(d):
                v = x[order[r], f]
                if v < lo[f]:
                    lo[f] = v
                if v > hi[f]:
                    hi[f] = v
        n_cand = 0
        for f in range(d):
            if hi[f] > lo[f]:
                cand[n_cand] = f
                n_cand += 1
        if n_cand == 0:
            continue
        f = cand[min(int(u_feat[draw] * n_cand), n_cand - 1)]
        u = u_thr[draw]
        draw += 1
        if u <= 0.0:
            u = 0.5
        thr = lo[f] + u * (hi[f] - lo[f])
        if thr <= lo[f]:
            thr = 0.5 * (lo[f] + hi[f])
        # partition order[start:end] so rows with x < thr come first
        i = start
        j = end - 1
        while i <= j:
            if x[order[i], f] < thr:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
                j -= 1
        feature[node] = f
        threshold[node] = thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        depth[lnode] = depth[node] + 1
        depth[rnode] = depth[node] + 1
        stack_node[top] = rnode
        stack_start[top] = i
        stack_end[top] = end
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = i
        top += 1
    return n_nodes


@njit(cache=True)
def _path_lengths(x, feature, threshold, left, right, size, c_table):
    n = x.shape[0]
    n_trees = feature.shape[0]
    out = np.zeros(n)
    for s in range(n):
        total = 0.0
        for t in range(n_trees):
            node = 0
            h = 0
            while feature[t, node] >= 0:
                if x[s, feature[t, node]] < threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
                h += 1
            total += h + c_table[size[t, node]]
        out[s] = total / n_trees
    return out


@dataclass(frozen=True)
class Forest:
    """Flat-array forest; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    max_samples: int

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    def path(self, tree: int, x: np.ndarray) -> tuple[list[int], int]:
        """Split features met by ``x`` in one tree, and the leaf depth."""
        feats = []
        node = 0
        f = self.feature[tree]
        while f[node] >= 0:
            feats.append(int(f[node]))
            node = self.left[tree, node] if x[f[node]] < self.threshold[tree, node] else self.right[tree, node]
        return feats, int(self.depth[tree, node])

    def mean_path_length(self, x: np.ndarray) -> np.ndarray:
        c_table = average_path_length(np.arange(self.size.max() + 1))
        return _path_lengths(np.ascontiguousarray(x, dtype=np.float64), self.feature, self.threshold,
                             self.left, self.right, self.size, c_table)


def grow_forest(x: np.ndarray, n_estimators: int, max_samples: int, seed: int) -> Forest:
    n = x.shape[0]
    psi = min(max_samples, n)
    limit = height_limit(psi)
    max_nodes = 2 * psi - 1 if psi > 1 else 1
    shape = (n_estimators, max(max_nodes, 1))
    feature = np.full(shape, LEAF, dtype=np.int64)
    threshold = np.zeros(shape)
    left = np.full(shape, LEAF, dtype=np.int64)
    right = np.full(shape, LEAF, dtype=np.int64)
    size = np.zeros(shape, dtype=np.int64)
    depth = np.zeros(shape, dtype=np.int64)
    rng = np.random.default_rng(seed)
    xc = np.ascontiguousarray(x, dtype=np.float64)
    for t in range(n_estimators):
        rows = rng.choice(n, size=psi, replace=False).astype(np.int64)
        u_feat = rng.random(max_nodes)
        u_thr = rng.random(max_nodes)
        _build_tree(xc, rows, limit, u_feat, u_thr,
                    feature[t], threshold[t], left[t], right[t], size[t], depth[t])
    return Forest(feature, threshold, left, right, size, depth, psi)


@register
class IsolationForest(Model):
    """Score 2**(-E[h(x)] / c(psi)); close to 1 means easily isolated."""

    name = "IF"
    defaults = {"n_estimators": 100, "max_samples": 128}
    standardize = False
    stochastic = True
    _state_fields = ()

    def _check_params(self):
        if int(self.params["n_estimators"]) < 1:
            raise InvalidConfig("params.n_estimators: must be >= 1")
        if int(self.params["max_samples"]) < 1:
            raise InvalidConfig("params.max_samples: must be >= 1")

    def _fit(self, x):
        self.forest_ = grow_forest(x, int(self.params["n_estimators"]), int(self.params["max_samples"]), self.seed)
        self.train_scores_ = self.score_samples(x)

    @classmethod
    def from_forest(cls, forest: Forest, train_scores=None) -> "IsolationForest":
        model = cls(n_estimators=forest.n_trees, max_samples=forest.max_samples)
        model.forest_ = forest
        model.train_scores_ = train_scores
        return model

    @property
    def normalizer(self) -> float:
        return float(average_path_length(self.forest_.max_samples))

    def score_samples(self, x):
        x = np.atleast_2d(x)
        c = self.normalizer
        if c == 0.0:
            # a single-point subsample gives empty paths
            return np.ones(x.shape[0])
        return 2.0 ** (-self.forest_.mean_path_length(x) / c)

    def get_state(self):
        f = self.forest_
        return {
            "train_scores_": self.train_scores_,
            "feature": f.feature, "threshold": f.threshold, "left": f.left,
            "right": f.right, "size": f.size, "depth": f.depth, "max_samples": f.max_samples,
        }

    def set_state(self, state):
        self.train_scores_ = state["train_scores_"]
        self.forest_ = Forest(*(np.asarray(state[k]) for k in ("feature", "threshold", "left", "right", "size", "depth")),
                              max_samples=int(state["max_samples"]))
