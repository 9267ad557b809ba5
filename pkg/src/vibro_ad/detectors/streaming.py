"""Sliding-window detection over an ordered stream of feature rows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import InsufficientData
from ..features import FeatureTable
from .base import DetectorConfig, FittedDetector, ScoredSample, ThresholdRule, decide_score, fit, threshold


@dataclass(frozen=True)
class WindowRun:
    samples: tuple[ScoredSample, ...]
    warmup: np.ndarray
    training_rows: np.ndarray
    n_refits: int

    @property
    def scores(self) -> np.ndarray:
        return np.array([s.score for s in self.samples])

    @property
    def flags(self) -> np.ndarray:
        return np.array([s.is_anomaly for s in self.samples], dtype=bool)

    @property
    def normalized_scores(self) -> np.ndarray:
        return np.array([s.normalized_score for s in self.samples])


def sliding_window_run(
    stream: FeatureTable,
    config: DetectorConfig,
    init_n: int,
    rule: ThresholdRule,
    *,
    refit_every: int = 1,
    train_filter: Callable[[np.ndarray], np.ndarray] | None = None,
    on_sample: Callable[[int, FittedDetector, float, ScoredSample], None] | None = None,
) -> WindowRun:
    """Score rows in order, growing the training set with rows judged normal.

    The first ``init_n`` rows train the initial model and are reported with
    their training scores as warm-up. Each later row is scored against the
    current model; a normal row joins the training set and the model is
    refitted once ``refit_every`` rows have been added. ``train_filter`` maps
    the accumulated training row indices to the subset actually fitted on.
    ``on_sample(index, detector, threshold, scored)`` is called for every
    row after the warm-up with the model that scored it.
    """
    n = len(stream)
    if init_n < 1 or n < init_n:
        raise InsufficientData(f"stream has {n} rows, need at least init_n={init_n}")
    if refit_every < 1:
        raise ValueError("refit_every must be >= 1")
    need = config.model_class(**config.params).min_rows(stream.n_features)
    if init_n < need:
        raise InsufficientData(f"{config.algorithm} needs init_n >= {need}, got {init_n}")

    x = stream.values
    names = stream.names

    def refit(rows):
        use = rows if train_filter is None else np.sort(np.asarray(train_filter(rows), dtype=int))
        return fit(config, x[use], names)

    training = list(range(init_n))
    model = refit(np.array(training))
    n_refits = 1
    thr = threshold(model, rule)
    samples = [decide_score(model, s, thr) for s in model.train_scores] if train_filter is None else \
        [decide_score(model, s, thr) for s in model.score_samples(x[:init_n])]
    pending = 0
    for i in range(init_n, n):
        sample = decide_score(model, model.score_samples(x[i:i + 1])[0], thr)
        samples.append(sample)
        if on_sample is not None:
            on_sample(i, model, thr, sample)
        if sample.is_anomaly:
            continue
        training.append(i)
        pending += 1
        if pending >= refit_every:
            model = refit(np.array(training))
            thr = threshold(model, rule)
            n_refits += 1
            pending = 0
    warmup = np.zeros(n, dtype=bool)
    warmup[:init_n] = True
    return WindowRun(tuple(samples), warmup, np.array(training), n_refits)
