"""Unsupervised vibration fault detection and explainable diagnosis.

Stage 1 turns signals into tagged features (:mod:`vibro_ad.features`),
stage 2 scores them with one of eleven detectors (:mod:`vibro_ad.detectors`)
and stage 3 ranks feature importance to name the fault
(:mod:`vibro_ad.explain`, :mod:`vibro_ad.diagnosis`).
"""

from .detectors import (
    ALGORITHMS,
    DetectorConfig,
    FittedDetector,
    ScoredSample,
    ThresholdRule,
    decide,
    ensemble_decide,
    fit,
    sliding_window_run,
    threshold,
)
from .diagnosis import classify, diagnose, drop_general, resolve_mode, root_cause
from .errors import VibroError
from .evaluation import confusion_matrix, f1_score, pr_auc, run_dynamic_experiment, run_static_experiment
from .explain import ImportanceRanking, ShapleyConfig, kendall_tau_distance, local_diffi, shapley_importance
from .features import FeatureSpec, FeatureTable, FeatureVector, extract, kurtosis, rms, standardize
from .signal import VibrationSignal, band_energy, compute_spectrum, envelope_spectrum
from .synth import SynthFaultSpec, generate, generate_dataset

__version__ = "0.1.0"
