"""Detection metrics and the repeated-split / sliding-window experiment protocols."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors.base import DetectorConfig, ThresholdRule, fit, threshold
from .detectors.streaming import WindowRun, sliding_window_run
from .errors import InsufficientData, InvalidConfig, ValidationError
from .features import FeatureTable


class DegenerateMetricWarning(UserWarning):
    """A metric was undefined (no positives or empty denominator) and reported as 0."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.fn, self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _bools(name, v) -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    return a.astype(bool)


def confusion_matrix(pred, truth) -> ConfusionMatrix:
    """Counts with "anomaly" as the positive class."""
    p, t = _bools("pred", pred), _bools("truth", truth)
    if p.size == 0 or p.size != t.size:
        raise ValidationError(f"pred and truth must be non-empty and equal length ({p.size} vs {t.size})")
    return ConfusionMatrix(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)), int(np.sum(~p & ~t)))


def f1_score(cm: ConfusionMatrix) -> float:
    """2TP / (2TP + FP + FN); 0 with a warning when TP is 0."""
    if cm.tp == 0:
        warnings.warn("F1 is degenerate: no true positives", DegenerateMetricWarning, stacklevel=2)
        return 0.0
    return 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn)


def pr_auc(scores, truth) -> float:
    """Average precision, sum over distinct thresholds of (R_i - R_{i-1}) * P_i.

    Samples with equal scores enter the curve together.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = _bools("truth", truth)
    if s.size == 0 or s.size != t.size:
        raise ValidationError("scores and truth must be non-empty and equal length")
    n_pos = int(t.sum())
    if n_pos == 0:
        warnings.warn("PR-AUC is degenerate: no positives", DegenerateMetricWarning, stacklevel=2)
        return 0.0
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    # last index of each run of tied scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(t)[ends]
    seen = ends + 1
    precision = tp / seen
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# ---------------------------------------------------------------------------
# experiments


METRICS = ("f1", "pr_auc", "tp", "fp", "fn", "tn")


@dataclass
class EvalRun:
    kind: str
    config: DetectorConfig
    iterations: int
    seed: int
    split: dict
    per_iteration: list[dict]
    aggregate: dict = field(default_factory=dict)
    windows: list[WindowRun] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.aggregate:
            self.aggregate = aggregate(self.per_iteration)

    @property
    def degenerate(self) -> bool:
        return any(row.get("degenerate") for row in self.per_iteration)

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def std(self, metric: str) -> float:
        return self.aggregate[metric]["std"]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "iterations": self.iterations,
            "seed": self.seed,
            "split": self.split,
            "per_iteration": self.per_iteration,
            "aggregate": self.aggregate,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        keys = sorted({k for row in self.per_iteration for k in row})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in self.per_iteration:
            w.writerow({k: row.get(k, "") for k in keys})
        return buf.getvalue()

    def save(self, json_path: str | Path, csv_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.to_json() + "\n")
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv())


def aggregate(rows: list[dict]) -> dict:
    """Mean and population std of every numeric metric across iterations."""
    out = {}
    keys = sorted({k for r in rows for k, v in r.items()
                   if isinstance(v, (int, float, np.number)) and not isinstance(v, bool) and k != "iteration"})
    for k in keys:
        vals = np.array([r[k] for r in rows if r.get(k) is not None], dtype=float)
        if vals.size:
            out[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def _metrics(pred, truth, scores) -> dict:
    cm = confusion_matrix(pred, truth)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateMetricWarning)
        row = {"f1": f1_score(cm), "pr_auc": pr_auc(scores, truth), **cm.to_dict()}
    row["degenerate"] = any(issubclass(w.category, DegenerateMetricWarning) for w in caught)
    return row


def static_split(labels: np.ndarray, rng: np.random.Generator, normal_frac: float = 0.8,
                 anomaly_frac: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Training rows = ``normal_frac`` of normals plus ``anomaly_frac`` of anomalies."""
    normals = np.flatnonzero(~labels)
    anomalies = np.flatnonzero(labels)
    n_norm = int(round(normal_frac * normals.size))
    n_anom = int(round(anomaly_frac * anomalies.size))
    if n_norm < 1 or n_anom < 1 or n_norm == normals.size or n_anom == anomalies.size:
        raise InsufficientData(f"cannot split {normals.size} normal / {anomalies.size} anomalous rows "
                               f"into training and test groups")
    train = np.sort(np.r_[rng.choice(normals, n_norm, replace=False), rng.choice(anomalies, n_anom, replace=False)])
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def run_static_experiment(
    table: FeatureTable,
    config: DetectorConfig,
    iters: int,
    *,
    seed: int = 0,
    normal_frac: float = 0.8,
    anomaly_frac: float = 0.2,
    rule: ThresholdRule | None = None,
    vary_seed: bool = True,
) -> EvalRun:
    """Repeated random static splits.

    The threshold defaults to the contamination rule with the anomaly share
    of each training group. With ``vary_seed=False`` every iteration reuses
    the same split and detector seed.
    """
    if iters < 1:
        raise InvalidConfig("iterations: must be >= 1")
    if not (0 < normal_frac < 1 and 0 < anomaly_frac < 1):
        raise InvalidConfig("split fractions must lie in (0, 1)")
    if table.labels is None:
        raise InvalidConfig("static experiment needs a labelled table")
    labels = np.asarray(table.labels, dtype=bool)
    if labels.all() or not labels.any():
        raise InsufficientData("static experiment needs both normal and anomalous rows")
    rows = []
    for it in range(iters):
        k = it if vary_seed else 0
        rng = np.random.default_rng([seed, k])
        train, test = static_split(labels, rng, normal_frac, anomaly_frac)
        f = fit(config.with_seed(config.seed + k), table.values[train], table.names)
        r = rule or ThresholdRule.of_contamination(float(labels[train].mean()))
        thr = threshold(f, r)
        scores = f.score_samples(table.values[test])
        rows.append({"iteration": it, "threshold": thr, "n_train": int(train.size),
                     **_metrics(scores > thr, labels[test], scores)})
    split = {"kind": "static", "normal_frac": normal_frac, "anomaly_frac": anomaly_frac}
    return EvalRun("static", config, iters, seed, split, rows)


def random_dropout(rng: np.random.Generator, dropout: float):
    """Training-row filter that leaves out a fresh random ``dropout`` share on each refit."""

    def keep(rows: np.ndarray) -> np.ndarray:
        n_drop = int(round(dropout * rows.size))
        if n_drop == 0:
            return rows
        return np.delete(rows, rng.choice(rows.size, n_drop, replace=False))

    return keep


def detection_delay(flags: np.ndarray, onset: int) -> int | None:
    """Rows between ``onset`` and the first flag at or after it (None if never flagged)."""
    hits = np.flatnonzero(np.asarray(flags, dtype=bool)[onset:])
    return int(hits[0]) if hits.size else None


def run_dynamic_experiment(
    stream: FeatureTable,
    config: DetectorConfig,
    repeats: int,
    *,
    init_n: int = 100,
    dropout: float = 0.05,
    seed: int = 0,
    rule: ThresholdRule | None = None,
    refit_every: int = 1,
    onset: int | None = None,
    onset_window: int = 10,
) -> EvalRun:
    """Repeated sliding-window runs with random training-row dropout.

    Metrics cover rows after the warm-up. ``onset`` defaults to the first
    anomalous label; ``detected_in_window`` records whether the first flag at
    or after it lies within ``onset_window`` rows.
    """
    if repeats < 1:
        raise InvalidConfig("repeats: must be >= 1")
    if not 0 <= dropout < 1:
        raise InvalidConfig("dropout: must lie in [0, 1)")
    rule = rule or ThresholdRule.max_train()
    labels = None if stream.labels is None else np.asarray(stream.labels, dtype=bool)
    if onset is None and labels is not None and labels.any():
        onset = int(np.flatnonzero(labels)[0])
    rows, windows = [], []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        run = sliding_window_run(stream, config.with_seed(config.seed + r), init_n, rule,
                                 refit_every=refit_every,
                                 train_filter=random_dropout(rng, dropout) if dropout > 0 else None)
        windows.append(run)
        flags, scores = run.flags, run.scores
        row = {"iteration": r, "n_flagged": int(flags[init_n:].sum()), "n_refits": run.n_refits}
        if labels is not None:
            row.update(_metrics(flags[init_n:], labels[init_n:], scores[init_n:]))
        if onset is not None:
            delay = detection_delay(flags, onset)
            row["detection_delay"] = delay
            row["detected_in_window"] = delay is not None and delay <= onset_window
            if labels is not None:
                post = slice(onset, None)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateMetricWarning)
                    row["f1_post_onset"] = f1_score(confusion_matrix(flags[post], labels[post]))
        rows.append(row)
    split = {"kind": "dynamic", "init_n": init_n, "dropout": dropout, "refit_every": refit_every,
             "onset": onset, "onset_window": onset_window}
    return EvalRun("dynamic", config, repeats, seed, split, rows, windows=windows)
