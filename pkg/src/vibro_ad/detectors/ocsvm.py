"""One-class SVM (nu formulation) trained by an SMO solver."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import InvalidConfig
from .base import Model, register

log = logging.getLogger(__name__)


def rbf_kernel(a, b, gamma):
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def kernel_matrix(a, b, kernel, gamma):
    if kernel == "rbf":
        return rbf_kernel(a, b, gamma)
    if kernel == "linear":
        return a @ b.T
    raise InvalidConfig(f"params.kernel: unsupported kernel {kernel!r}")


def smo_one_class(q, nu, tol=1e-6, max_passes=10_000):
    """Solve min 1/2 a'Qa  s.t. 0 <= a_i <= 1, sum(a) = nu * n.

    Uses maximal-violating-pair working-set selection. Returns (alpha, rho)
    where rho is the offset of the decision function sum_i a_i K(x_i, x) - rho.
    """
    n = q.shape[0]
    target = nu * n
    alpha = np.zeros(n)
    whole = int(np.floor(target))
    alpha[:whole] = 1.0
    if whole < n:
        alpha[whole] = target - whole
    grad = q @ alpha
    diag = np.diag(q).copy()

    converged = False
    for it in range(max_passes * n):
        up = alpha < 1.0
        down = alpha > 0.0
        if not up.any() or not down.any():
            converged = True
            break
        g_up = np.where(up, grad, np.inf)
        g_down = np.where(down, grad, -np.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_down))
        gap = grad[j] - grad[i]
        if gap < tol:
            converged = True
            break
        curv = diag[i] + diag[j] - 2.0 * q[i, j]
        if curv <= 0:
            curv = 1e-12
        step = min(gap / curv, 1.0 - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (q[:, i] - q[:, j])
    if not converged:
        log.warning("OCSVM SMO stopped at the iteration cap without meeting tol=%g", tol)

    free = (alpha > 1e-12) & (alpha < 1.0 - 1e-12)
    if free.any():
        rho = float(grad[free].mean())
    else:
        at_upper = grad[alpha >= 1.0 - 1e-12]
        at_lower = grad[alpha <= 1e-12]
        hi = at_upper.max() if at_upper.size else at_lower.min()
        lo = at_lower.min() if at_lower.size else at_upper.max()
        rho = float((hi + lo) / 2.0)
    return alpha, rho


@register
class OCSVM(Model):
    """Negated one-class SVM decision value: rho - sum_i a_i K(x_i, x)."""

    name = "OCSVM"
    defaults = {"kernel": "rbf", "gamma": 0.2, "nu": 0.7, "tol": 1e-6, "max_passes": 10_000}
    _state_fields = ("support_vectors_", "dual_coef_", "rho_")

    def _check_params(self):
        p = self.params
        if not 0.0 < p["nu"] <= 1.0:
            raise InvalidConfig("params.nu: must lie in (0, 1]")
        if p["kernel"] not in ("rbf", "linear"):
            raise InvalidConfig(f"params.kernel: unsupported kernel {p['kernel']!r}")
        if p["kernel"] == "rbf" and p["gamma"] <= 0:
            raise InvalidConfig("params.gamma: must be > 0")

    def _fit(self, x):
        p = self.params
        q = kernel_matrix(x, x, p["kernel"], p["gamma"])
        alpha, rho = smo_one_class(q, p["nu"], p["tol"], int(p["max_passes"]))
        sv = alpha > 0
        self.support_vectors_ = x[sv]
        self.dual_coef_ = alpha[sv]
        self.rho_ = rho
        self.train_scores_ = rho - q[:, sv] @ alpha[sv]

    def decision_function(self, x):
        k = kernel_matrix(np.atleast_2d(x), self.support_vectors_, self.params["kernel"], self.params["gamma"])
        return k @ self.dual_coef_ - self.rho_

    def score_samples(self, x):
        return -self.decision_function(x)
