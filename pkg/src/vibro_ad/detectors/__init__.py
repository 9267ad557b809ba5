"""Anomaly detectors sharing one fit/score contract."""

from . import _load_all  # noqa: F401
from .base import (
    REGISTRY,
    DetectorConfig,
    FittedDetector,
    Model,
    ScoredSample,
    ThresholdRule,
    canonical_algorithm,
    decide,
    decide_score,
    ensemble_decide,
    fit,
    normalize_score,
    threshold,
    threshold_from_scores,
)
from .serialize import dump_model, load_model
from .streaming import WindowRun, sliding_window_run

ALGORITHMS = ("kNN", "MCD", "LOF", "CBLOF", "OCSVM", "FB", "FastABOD", "IF", "HBOS", "LODA", "Ensemble")


def _scorer(algorithm):
    def score(f: FittedDetector, x) -> float:
        if f.algorithm != algorithm:
            raise ValueError(f"expected a fitted {algorithm} detector, got {f.algorithm}")
        return f.score(x)

    score.__name__ = f"score_{algorithm.lower()}"
    score.__doc__ = f"Anomaly score of one sample under a fitted {algorithm} detector."
    return score


score_knn = _scorer("kNN")
score_mcd = _scorer("MCD")
score_lof = _scorer("LOF")
score_cblof = _scorer("CBLOF")
score_ocsvm = _scorer("OCSVM")
score_fb = _scorer("FB")
score_fastabod = _scorer("FastABOD")
score_if = _scorer("IF")
score_hbos = _scorer("HBOS")
score_loda = _scorer("LODA")

__all__ = [
    "ALGORITHMS", "REGISTRY", "DetectorConfig", "FittedDetector", "Model", "ScoredSample", "ThresholdRule",
    "WindowRun", "canonical_algorithm", "decide", "decide_score", "dump_model", "ensemble_decide", "fit",
    "load_model", "normalize_score", "score_cblof", "score_fastabod", "score_fb", "score_hbos", "score_if",
    "score_knn", "score_loda", "score_lof", "score_mcd", "score_ocsvm", "sliding_window_run", "threshold",
    "threshold_from_scores",
]
