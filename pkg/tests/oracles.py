"""Independent brute-force reference implementations used by the tests.

Everything here is written with plain loops over Python floats so that it
shares no code path with the vectorised library.
"""

from __future__ import annotations

import itertools
import math


def dist(a, b):
    return math.sqrt(sum((float(u) - float(v)) ** 2 for u, v in zip(a, b)))


def neighbours(train, q, k, skip=None):
    """k nearest (distance, index) pairs, ties broken by index."""
    cands = [(dist(q, t), j) for j, t in enumerate(train) if j != skip]
    cands.sort()
    return cands[:k]


def knn_score(train, q, k, method="largest", skip=None):
    ds = [d for d, _ in neighbours(train, q, k, skip)]
    if method == "largest":
        return ds[-1]
    if method == "mean":
        return sum(ds) / len(ds)
    ds = sorted(ds)
    mid = len(ds) // 2
    return ds[mid] if len(ds) % 2 else (ds[mid - 1] + ds[mid]) / 2


def lof_scores(train, queries, k, eps=1e-10, training=False):
    """LOF with the usual reachability distance max(k-dist(o), d(p, o))."""
    n = len(train)
    nbrs = [neighbours(train, train[i], k, skip=i) for i in range(n)]
    kdist = [nb[-1][0] for nb in nbrs]

    def lrd(nb):
        reach = [max(kdist[j], d) for d, j in nb]
        return 1.0 / (sum(reach) / len(reach) + eps)

    lrd_train = [lrd(nb) for nb in nbrs]
    out = []
    for qi, q in enumerate(queries):
        nb = nbrs[qi] if training else neighbours(train, q, k)
        own = lrd_train[qi] if training else lrd(nb)
        out.append(sum(lrd_train[j] for _, j in nb) / len(nb) / own)
    return out


def abof(train, q, k, skip=None):
    """Distance-weighted variance of the angle term over neighbour pairs."""
    nb = [train[j] for _, j in neighbours(train, q, k, skip)]
    vals, weights = [], []
    for b, c in itertools.combinations(nb, 2):
        ab = [float(x) - float(y) for x, y in zip(b, q)]
        ac = [float(x) - float(y) for x, y in zip(c, q)]
        nab = sum(v * v for v in ab)
        nac = sum(v * v for v in ac)
        if nab == 0 or nac == 0:
            continue
        dot = sum(u * v for u, v in zip(ab, ac))
        vals.append(dot / (nab * nac))
        weights.append(1.0 / math.sqrt(nab * nac))
    wsum = sum(weights)
    mean = sum(w * v for w, v in zip(weights, vals)) / wsum
    return sum(w * (v - mean) ** 2 for w, v in zip(weights, vals)) / wsum


def exact_shapley(f, x, background):
    """Shapley values of v(S) = mean_b f(x_S, b_rest) by subset enumeration."""
    p = len(x)

    def value(subset):
        total = 0.0
        for b in background:
            z = [x[i] if i in subset else b[i] for i in range(p)]
            total += f(z)
        return total / len(background)

    phi = []
    for i in range(p):
        others = [j for j in range(p) if j != i]
        acc = 0.0
        for r in range(p):
            for s in itertools.combinations(others, r):
                w = math.factorial(r) * math.factorial(p - r - 1) / math.factorial(p)
                acc += w * (value(set(s) | {i}) - value(set(s)))
        phi.append(acc)
    return phi


def average_precision_sweep(scores, truth):
    """AP by sweeping every distinct threshold and summing recall steps times precision."""
    n_pos = sum(truth)
    thresholds = sorted(set(scores), reverse=True)
    ap, prev_recall = 0.0, 0.0
    for t in thresholds:
        flagged = [s >= t for s in scores]
        tp = sum(1 for f, y in zip(flagged, truth) if f and y)
        fp = sum(1 for f, y in zip(flagged, truth) if f and not y)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def dft_magnitude(x, k):
    """|X_k| of the plain DFT sum."""
    n = len(x)
    re = sum(v * math.cos(2 * math.pi * k * i / n) for i, v in enumerate(x))
    im = -sum(v * math.sin(2 * math.pi * k * i / n) for i, v in enumerate(x))
    return math.hypot(re, im)


def kendall_discordant(a, b):
    pos = {name: i for i, name in enumerate(b)}
    return sum(1 for i, j in itertools.combinations(range(len(a)), 2) if pos[a[i]] > pos[a[j]])
