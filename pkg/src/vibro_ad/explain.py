"""Per-sample feature importance: permutation Shapley values and Local-DIFFI."""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .detectors.base import FittedDetector, ThresholdRule, threshold
from .errors import IncomparableRankings, InvalidConfig, WrongAlgorithm
from .features import FeatureVector

SHAPLEY = "shapley"
LOCAL_DIFFI = "local_diffi"
METHODS = (SHAPLEY, LOCAL_DIFFI)


@dataclass(frozen=True)
class ImportanceRanking:
    """Features ordered by descending weight; equal weights keep declaration order.

    ``feature_order`` is the declaration order of the features, used for
    tie-breaking. ``residual`` is the Shapley additivity residual and
    ``inlier`` marks Local-DIFFI rankings computed for a sample that the
    forest did not flag.
    """

    entries: tuple[tuple[str, float], ...]
    method: str
    feature_order: tuple[str, ...] = ()
    sample_ref: str | int | None = None
    residual: float | None = None
    seconds: float | None = None
    inlier: bool | None = None
    degenerate: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfig(f"method: unknown explainer {self.method!r}")
        if not self.feature_order:
            object.__setattr__(self, "feature_order", tuple(n for n, _ in self.entries))

    @classmethod
    def from_weights(cls, names, weights, method: str, **kwargs) -> "ImportanceRanking":
        names = tuple(names)
        weights = [float(w) for w in weights]
        if len(names) != len(weights):
            raise ValueError("names and weights differ in length")
        order = sorted(range(len(names)), key=lambda i: -weights[i])  # stable: ties keep declaration order
        return cls(tuple((names[i], weights[i]) for i in order), method, names, **kwargs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])

    def weight(self, name: str) -> float:
        for n, w in self.entries:
            if n == name:
                return w
        raise KeyError(name)

    def rank_of(self, name: str) -> int:
        """Zero-based position of ``name``."""
        return self.names.index(name)

    def restrict(self, keep) -> "ImportanceRanking":
        """Drop every feature not in ``keep``, preserving relative order."""
        keep = set(keep)
        entries = tuple(e for e in self.entries if e[0] in keep)
        order = tuple(n for n in self.feature_order if n in keep)
        return ImportanceRanking(entries, self.method, order, self.sample_ref, self.residual,
                                 self.seconds, self.inlier, self.degenerate)

    def sorted(self) -> "ImportanceRanking":
        weights = dict(self.entries)
        order = [n for n in self.feature_order if n in weights]
        return ImportanceRanking.from_weights(order, [weights[n] for n in order], self.method,
                                              sample_ref=self.sample_ref, residual=self.residual,
                                              seconds=self.seconds, inlier=self.inlier,
                                              degenerate=self.degenerate)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "method": self.method,
            "sample": self.sample_ref,
            "ranking": [{"feature": n, "weight": w} for n, w in self.entries],
        }
        if self.residual is not None:
            d["additivity_residual"] = self.residual
        if self.inlier is not None:
            d["inlier"] = self.inlier
        if self.degenerate:
            d["degenerate"] = True
        if include_timing and self.seconds is not None:
            d["seconds"] = self.seconds
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImportanceRanking":
        entries = tuple((e["feature"], float(e["weight"])) for e in d["ranking"])
        return cls(entries, d["method"], (), d.get("sample"), d.get("additivity_residual"),
                   d.get("seconds"), d.get("inlier"), bool(d.get("degenerate", False)))

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


# ---------------------------------------------------------------------------
# Shapley values


@dataclass(frozen=True)
class ShapleyConfig:
    """Permutation-sampling knobs.

    ``background`` is ``"training_sample"`` (``background_size`` random
    training rows) or ``"training_means"`` (a single row of column means).
    """

    n_permutations: int = 128
    background: str = "training_sample"
    background_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if int(self.n_permutations) < 1:
            raise InvalidConfig(f"n_permutations: must be >= 1, got {self.n_permutations}")
        if self.background not in ("training_sample", "training_means"):
            raise InvalidConfig(f"background: unknown kind {self.background!r}")
        if int(self.background_size) < 1:
            raise InvalidConfig("background_size: must be >= 1")


def _permutations(p: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Every ordering when ``n >= p!``; else antithetic pairs (a shuffle and its reverse)."""
    if n >= math.factorial(p):
        return np.array(list(itertools.permutations(range(p))), dtype=np.int64).reshape(-1, p)
    out = np.empty((n, p), dtype=np.int64)
    for i in range(0, n, 2):
        perm = rng.permutation(p)
        out[i] = perm
        if i + 1 < n:
            out[i + 1] = perm[::-1]
    return out


def shapley_values(score_fn, x: np.ndarray, background: np.ndarray, n_permutations: int,
                   rng: np.random.Generator | None = None) -> tuple[np.ndarray, float, float]:
    """Shapley values of ``score_fn`` at ``x`` for the background-expectation game.

    The value of a coalition S is the mean score over background rows with
    the features in S replaced by those of ``x``. Returns (phi, f(x),
    baseline), where baseline is the mean background score.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    bg = np.atleast_2d(np.asarray(background, dtype=np.float64))
    p, m = x.size, bg.shape[0]
    perms = _permutations(p, int(n_permutations), rng if rng is not None else np.random.default_rng(0))
    n_perm = perms.shape[0]
    # composite rows: for each permutation, step j has the first j features of the order taken from x
    steps = np.zeros((n_perm, p + 1, p), dtype=bool)
    for j in range(1, p + 1):
        steps[np.arange(n_perm)[:, None], j, perms[:, :j]] = True
    # coalition values depend only on the mask, so each distinct mask is scored once
    masks, inverse = np.unique(steps.reshape(-1, p), axis=0, return_inverse=True)
    composite = np.where(masks[:, None, :], x[None, None, :], bg[None, :, :]).reshape(-1, p)
    coalition = np.asarray(score_fn(composite), dtype=np.float64).reshape(masks.shape[0], m).mean(axis=1)
    values = coalition[inverse.ravel()].reshape(n_perm, p + 1)
    marginal = np.diff(values, axis=1)  # (n_perm, p), in permutation order
    phi = np.zeros(p)
    for k in range(n_perm):
        phi[perms[k]] += marginal[k]
    phi /= n_perm
    return phi, float(values[0, -1]), float(values[0, 0])


def _background(f, cfg: ShapleyConfig, rng: np.random.Generator) -> np.ndarray:
    train = np.atleast_2d(np.asarray(f.train_matrix, dtype=np.float64))
    if cfg.background == "training_means":
        return train.mean(axis=0, keepdims=True)
    k = min(int(cfg.background_size), train.shape[0])
    idx = np.sort(rng.choice(train.shape[0], size=k, replace=False))
    return train[idx]


def _as_array(f, x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        if tuple(x.names) != tuple(f.feature_names):
            raise ValueError("feature vector does not match the detector's features")
        return np.asarray(x.values, dtype=np.float64)
    return np.asarray(x, dtype=np.float64).ravel()


def shapley_importance(f, x, cfg: ShapleyConfig | None = None, *, background=None,
                       sample_ref=None) -> ImportanceRanking:
    """Rank features by |phi| for the detector's anomaly score at ``x``.

    ``f`` needs ``score_samples``, ``feature_names`` and, unless
    ``background`` is given, ``train_matrix``.
    """
    cfg = cfg or ShapleyConfig()
    start = time.perf_counter()
    xv = _as_array(f, x)
    rng = np.random.default_rng(cfg.seed)
    bg = _background(f, cfg, rng) if background is None else np.atleast_2d(np.asarray(background, dtype=float))
    phi, fx, base = shapley_values(f.score_samples, xv, bg, cfg.n_permutations, rng)
    residual = abs(float(phi.sum()) - (fx - base))
    weights = np.abs(phi)
    return ImportanceRanking.from_weights(
        f.feature_names, weights, SHAPLEY, sample_ref=sample_ref, residual=residual,
        seconds=time.perf_counter() - start, degenerate=bool(np.all(weights == 0)))


# ---------------------------------------------------------------------------
# Local-DIFFI


def local_diffi_weights(forest, x: np.ndarray) -> np.ndarray:
    """Mean depth-based importance of each feature along the paths of ``x``.

    Every split on feature j met by ``x`` in a tree whose leaf sits at depth
    h adds 1 / h - 1 / h_max to feature j's total, where h_max is the tree
    height limit plus one; the weight is that total over the number of such
    splits, or 0 for features never met.
    """
    d = x.shape[0]
    h_max = math.ceil(math.log2(max(forest.max_samples, 2))) + 1
    total = np.zeros(d)
    count = np.zeros(d)
    for t in range(forest.n_trees):
        feats, depth = forest.path(t, x)
        if not feats:
            continue
        delta = 1.0 / depth - 1.0 / h_max
        for j in feats:
            count[j] += 1
            total[j] += delta
    return np.divide(total, count, out=np.zeros(d), where=count > 0)


def local_diffi(f: FittedDetector, x, *, thr: float | None = None, sample_ref=None) -> ImportanceRanking:
    """Local-DIFFI ranking for ``x`` under a fitted Isolation Forest.

    The ranking is flagged ``inlier`` when the score does not exceed ``thr``
    (by default the largest training score).
    """
    if getattr(f, "algorithm", None) != "IF":
        raise WrongAlgorithm(f"local_diffi needs an Isolation Forest, got {getattr(f, 'algorithm', type(f).__name__)}")
    start = time.perf_counter()
    xv = _as_array(f, x)
    xs = f.scaling.apply(xv[None, :])[0]
    weights = local_diffi_weights(f.model.forest_, xs)
    if thr is None:
        thr = threshold(f, ThresholdRule.max_train())
    inlier = not f.score(xv) > thr
    return ImportanceRanking.from_weights(
        f.feature_names, weights, LOCAL_DIFFI, sample_ref=sample_ref,
        seconds=time.perf_counter() - start, inlier=inlier, degenerate=bool(np.all(weights == 0)))


def explain(f: FittedDetector, x, method: str = LOCAL_DIFFI, shapley: ShapleyConfig | None = None,
            *, thr: float | None = None, sample_ref=None) -> ImportanceRanking:
    if method == LOCAL_DIFFI:
        return local_diffi(f, x, thr=thr, sample_ref=sample_ref)
    if method == SHAPLEY:
        return shapley_importance(f, x, shapley, sample_ref=sample_ref)
    raise InvalidConfig(f"explainer: unknown method {method!r}")


# ---------------------------------------------------------------------------
# comparison


def kendall_tau_distance(a: ImportanceRanking, b: ImportanceRanking) -> float:
    """Fraction of feature pairs ordered differently by the two rankings."""
    if set(a.names) != set(b.names) or len(a.names) != len(b.names):
        raise IncomparableRankings("rankings cover different feature sets")
    n = len(a.names)
    if n < 2:
        return 0.0
    pos = {name: i for i, name in enumerate(b.names)}
    order = [pos[name] for name in a.names]
    discordant = sum(1 for i in range(n) for j in range(i + 1, n) if order[i] > order[j])
    return discordant / (n * (n - 1) / 2)
