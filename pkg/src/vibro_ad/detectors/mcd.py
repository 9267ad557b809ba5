"""Robust Mahalanobis distance from a FastMCD location/scatter estimate."""

from __future__ import annotations

import numpy as np
from scipy.stats import chi2

from ..errors import SingularCovariance
from .base import Model, register


def _stats(x, assume_centered):
    loc = np.zeros(x.shape[1]) if assume_centered else x.mean(axis=0)
    d = x - loc
    return loc, d.T @ d / x.shape[0]


def _is_singular(cov, rtol=1e-10):
    eig = np.linalg.eigvalsh(cov)
    top = max(float(eig.max()), 0.0)
    return top == 0.0 or float(eig.min()) <= rtol * top


def mahalanobis_sq(x, loc, precision):
    d = x - loc
    return np.einsum("ij,jk,ik->i", d, precision, d)


def fast_mcd(x, h, rng, n_trials=100, n_best=10, max_csteps=100, assume_centered=False):
    """Location and scatter of the h-subset with (approximately) minimal determinant.

    Random (p+1)-subsets are grown until non-singular, refined with two
    C-steps each, and the ``n_best`` candidates are iterated to convergence.
    """
    n, p = x.shape

    def c_step(loc, cov):
        md = mahalanobis_sq(x, loc, np.linalg.pinv(cov))
        idx = np.argsort(md, kind="stable")[:h]
        loc, cov = _stats(x[idx], assume_centered)
        return loc, cov, idx

    candidates = []
    for _ in range(n_trials):
        perm = rng.permutation(n)
        m = min(p + 1, n)
        loc, cov = _stats(x[perm[:m]], assume_centered)
        while _is_singular(cov) and m < n:
            m += 1
            loc, cov = _stats(x[perm[:m]], assume_centered)
        for _ in range(2):
            loc, cov, idx = c_step(loc, cov)
        candidates.append((np.linalg.slogdet(cov)[1], loc, cov))

    candidates.sort(key=lambda c: c[0])
    best = None
    for logdet, loc, cov in candidates[:n_best]:
        for _ in range(max_csteps):
            new_loc, new_cov, idx = c_step(loc, cov)
            new_logdet = np.linalg.slogdet(new_cov)[1]
            loc, cov = new_loc, new_cov
            if new_logdet >= logdet - 1e-12:
                logdet = new_logdet
                break
            logdet = new_logdet
        if best is None or logdet < best[0]:
            best = (logdet, loc, cov, idx)
    return best[1], best[2], best[3]


@register
class MCD(Model):
    """Mahalanobis distance to a minimum covariance determinant estimate."""

    name = "MCD"
    defaults = {
        "assume_centered": False,
        "support_fraction": None,
        "n_trials": 100,
        "reweight": True,
    }
    _state_fields = ("location_", "covariance_", "precision_", "support_")

    def min_rows(self, n_features):
        return n_features + 2

    def _fit(self, x):
        n, p = x.shape
        centered = bool(self.params["assume_centered"])
        if _is_singular(_stats(x, centered)[1]):
            raise SingularCovariance(
                "MCD: training covariance is singular (constant or collinear columns); add jitter or drop the column"
            )
        frac = self.params["support_fraction"]
        h = (n + p + 1) // 2 if frac is None else int(np.ceil(frac * n))
        h = min(max(h, p + 1), n)
        rng = np.random.default_rng(self.seed)
        loc, cov, support = fast_mcd(x, h, rng, n_trials=int(self.params["n_trials"]), assume_centered=centered)
        if _is_singular(cov):
            raise SingularCovariance("MCD: the minimum-determinant subset has singular covariance; add jitter")

        # consistency correction towards the normal model
        md = mahalanobis_sq(x, loc, np.linalg.inv(cov))
        cov = cov * (np.median(md) / chi2.ppf(0.5, p))

        if self.params["reweight"]:
            md = mahalanobis_sq(x, loc, np.linalg.inv(cov))
            mask = md < chi2.ppf(0.975, p)
            if mask.sum() > p and not _is_singular(_stats(x[mask], centered)[1]):
                loc, cov = _stats(x[mask], centered)
                support = np.flatnonzero(mask)

        self.location_ = loc
        self.covariance_ = cov
        self.precision_ = np.linalg.inv(cov)
        self.support_ = np.asarray(support)
        self.train_scores_ = self.score_samples(x)

    def score_samples(self, x):
        md = mahalanobis_sq(np.atleast_2d(x), self.location_, self.precision_)
        return np.sqrt(np.maximum(md, 0.0))
