"""Histogram detectors: HBOS (per feature) and LODA (random projections)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidConfig
from .base import Model, register


def equal_width_histogram(values: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts and edges of ``n_bins`` equal bins spanning the value range.

    A constant column gets a unit-width range centred on its value.
    """
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return counts.astype(np.float64), edges


def bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin of each value; -1 below the first edge, n_bins above the last."""
    n_bins = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    # the last edge is inclusive
    idx = np.where(values == edges[-1], n_bins - 1, idx)
    idx = np.where(values > edges[-1], n_bins, idx)
    return idx


@register
class HBOS(Model):
    """Sum over features of log(1 / (height + alpha)).

    Heights are bin counts scaled so the tallest bin of each feature is 1.
    Values outside the training range but within ``tol`` bin widths of it
    take the nearest edge bin; anything further out counts as an empty bin.
    """

    name = "HBOS"
    defaults = {"n_bins": 5, "alpha": 0.1, "tol": 0.5}
    standardize = False
    _state_fields = ("heights_", "edges_")

    def _check_params(self):
        p = self.params
        if int(p["n_bins"]) < 1:
            raise InvalidConfig("params.n_bins: must be >= 1")
        if p["alpha"] < 0:
            raise InvalidConfig("params.alpha: must be >= 0")
        if p["tol"] < 0:
            raise InvalidConfig("params.tol: must be >= 0")

    def _fit(self, x):
        n_bins = int(self.params["n_bins"])
        heights, edges = [], []
        for col in x.T:
            counts, e = equal_width_histogram(col, n_bins)
            heights.append(counts / counts.max())
            edges.append(e)
        self.heights_ = np.array(heights)
        self.edges_ = np.array(edges)
        self.train_scores_ = self.score_samples(x)

    def feature_heights(self, x) -> np.ndarray:
        """Per-feature normalised bin height (before alpha) for each row."""
        x = np.atleast_2d(x)
        n_bins = self.heights_.shape[1]
        tol = self.params["tol"]
        out = np.empty(x.shape)
        for i in range(x.shape[1]):
            edges = self.edges_[i]
            width = edges[1] - edges[0]
            idx = bin_index(x[:, i], edges)
            below = (idx < 0) & (edges[0] - x[:, i] <= tol * width)
            above = (idx >= n_bins) & (x[:, i] - edges[-1] <= tol * width)
            idx = np.where(below, 0, np.where(above, n_bins - 1, idx))
            inside = (idx >= 0) & (idx < n_bins)
            out[:, i] = np.where(inside, self.heights_[i][np.clip(idx, 0, n_bins - 1)], 0.0)
        return out

    def score_samples(self, x):
        h = self.feature_heights(x) + self.params["alpha"]
        with np.errstate(divide="ignore"):
            return np.sum(-np.log(h), axis=1)


@register
class LODA(Model):
    """Mean negative log-probability over sparse random 1-D projections."""

    name = "LODA"
    defaults = {"n_bins": 5, "n_random_cuts": 50}
    stochastic = True
    _state_fields = ("projections_", "probs_", "edges_", "floor_")

    def _check_params(self):
        if int(self.params["n_bins"]) < 1:
            raise InvalidConfig("params.n_bins: must be >= 1")
        if int(self.params["n_random_cuts"]) < 1:
            raise InvalidConfig("params.n_random_cuts: must be >= 1")

    def _fit(self, x):
        n, d = x.shape
        rng = np.random.default_rng(self.seed)
        n_cuts, n_bins = int(self.params["n_random_cuts"]), int(self.params["n_bins"])
        nonzero = max(1, math.ceil(math.sqrt(d)))
        w = np.zeros((n_cuts, d))
        for i in range(n_cuts):
            cols = rng.choice(d, size=nonzero, replace=False)
            w[i, cols] = rng.standard_normal(nonzero)
        proj = x @ w.T
        probs, edges = [], []
        for i in range(n_cuts):
            counts, e = equal_width_histogram(proj[:, i], n_bins)
            probs.append(counts / n)
            edges.append(e)
        self.set_projections(w, np.array(probs), np.array(edges), floor=0.5 / n)
        self.train_scores_ = self.score_samples(x)

    def set_projections(self, projections, probs, edges, floor):
        """Install projection vectors and their histograms.

        ``floor`` is the probability assigned to empty bins and to
        projections falling outside the training range.
        """
        self.projections_ = np.atleast_2d(np.asarray(projections, dtype=float))
        self.probs_ = np.atleast_2d(np.asarray(probs, dtype=float))
        self.edges_ = np.atleast_2d(np.asarray(edges, dtype=float))
        self.floor_ = float(floor)

    def projection_probabilities(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        proj = x @ self.projections_.T
        n_bins = self.probs_.shape[1]
        out = np.empty(proj.shape)
        for i in range(proj.shape[1]):
            idx = bin_index(proj[:, i], self.edges_[i])
            inside = (idx >= 0) & (idx < n_bins)
            p = np.where(inside, self.probs_[i][np.clip(idx, 0, n_bins - 1)], 0.0)
            out[:, i] = np.maximum(p, self.floor_)
        return out

    def score_samples(self, x):
        return -np.mean(np.log(self.projection_probabilities(x)), axis=1)
