"""Turn an anomaly's importance ranking into a fault label or a root-cause list."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from .detectors.base import FittedDetector, ScoredSample, ThresholdRule, decide, threshold
from .errors import InvalidMode, InvalidSpec, NoSpecificFeatures
from .explain import LOCAL_DIFFI, ImportanceRanking, ShapleyConfig, explain
from .features import FeatureSpec

CLASSIFICATION = "unsupervised_classification"
ROOT_CAUSE = "root_cause_analysis"
AUTO = "auto"
MODES = (CLASSIFICATION, ROOT_CAUSE, AUTO)


def resolve_mode(mode: str, spec: FeatureSpec) -> str:
    """Check ``mode`` against the spec; ``auto`` picks classification when it is valid.

    Classification needs every specific feature tied to exactly one fault.
    """
    if mode not in MODES:
        raise InvalidMode(f"mode: unknown diagnosis mode {mode!r}; choose from {MODES}")
    if mode == AUTO:
        return CLASSIFICATION if spec.single_fault else ROOT_CAUSE
    if mode == CLASSIFICATION and not spec.single_fault:
        multi = [e.name for e in spec.entries if e.is_specific and len(e.fault_labels) != 1]
        raise InvalidMode(f"mode: classification needs single-fault specific features; {multi} map to several faults")
    return mode


def drop_general(r: ImportanceRanking, spec: FeatureSpec) -> ImportanceRanking:
    if set(r.names) != set(spec.names):
        raise InvalidSpec("ranking and feature spec cover different features")
    out = r.restrict(spec.specific_names)
    if not out.entries:
        raise NoSpecificFeatures("no specific features left after dropping general ones")
    return out


def _specific(r: ImportanceRanking, spec: FeatureSpec) -> ImportanceRanking:
    if set(r.names) <= set(spec.specific_names):
        if not r.entries:
            raise NoSpecificFeatures("ranking is empty")
        return r
    return drop_general(r, spec)


def classify(r: ImportanceRanking, spec: FeatureSpec) -> str:
    """Fault label of the top specific feature; equal weights go to the earlier spec entry."""
    ranked = _specific(r, spec)
    weights = dict(ranked.entries)
    order = [n for n in spec.names if n in weights]
    top = max(order, key=lambda n: weights[n])  # max keeps the first of equal weights
    labels = spec[top].fault_labels
    if len(labels) != 1:
        raise InvalidMode(f"{top} maps to several faults {list(labels)}; use root-cause analysis")
    return labels[0]


def root_cause(r: ImportanceRanking, spec: FeatureSpec) -> ImportanceRanking:
    """The full specific-feature ranking, flagged degenerate when all weights are zero."""
    ranked = _specific(r, spec).sorted()
    if all(w == 0 for _, w in ranked.entries) and not ranked.degenerate:
        ranked = ImportanceRanking(ranked.entries, ranked.method, ranked.feature_order, ranked.sample_ref,
                                   ranked.residual, ranked.seconds, ranked.inlier, True)
    return ranked


@dataclass(frozen=True)
class DiagnosisReport:
    sample_ref: str | int | None
    detected: bool
    mode: str
    scored: ScoredSample
    fault_label: str | None = None
    filtered_ranking: ImportanceRanking | None = None
    explanation_method: str | None = None
    seconds: dict | None = None

    def __post_init__(self):
        if self.fault_label is not None and not (self.detected and self.mode == CLASSIFICATION):
            raise ValueError("fault_label is only set for detected samples in classification mode")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "sample": self.sample_ref,
            "detected": self.detected,
            "mode": self.mode,
            **self.scored.to_dict(),
        }
        if self.fault_label is not None:
            d["fault_label"] = self.fault_label
        if self.filtered_ranking is not None:
            d["explainer"] = self.explanation_method
            d["ranking"] = [{"feature": n, "weight": w} for n, w in self.filtered_ranking.entries]
            if self.filtered_ranking.residual is not None:
                d["additivity_residual"] = self.filtered_ranking.residual
            if self.filtered_ranking.degenerate:
                d["degenerate"] = True
        if include_timing and self.seconds:
            d["seconds"] = self.seconds
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)


def to_json_lines(reports, include_timing: bool = False) -> str:
    return "".join(r.to_json(include_timing) + "\n" for r in reports)


def diagnose(
    f: FittedDetector,
    x,
    spec: FeatureSpec,
    mode: str = AUTO,
    explainer: str = LOCAL_DIFFI,
    *,
    thr: float | None = None,
    rule: ThresholdRule | None = None,
    shapley: ShapleyConfig | None = None,
    sample_ref=None,
) -> DiagnosisReport:
    """Detect, then (for anomalies only) explain and diagnose one sample.

    ``thr`` overrides the threshold derived from ``rule`` (default
    ``max_train``).
    """
    if tuple(spec.names) != tuple(f.feature_names):
        raise InvalidSpec("feature spec does not match the detector's features")
    mode = resolve_mode(mode, spec)
    if thr is None:
        thr = threshold(f, rule or ThresholdRule.max_train())
    t0 = time.perf_counter()
    scored = decide(f, x, thr)
    t1 = time.perf_counter()
    if not scored.is_anomaly:
        return DiagnosisReport(sample_ref, False, mode, scored, seconds={"detect": t1 - t0})
    ranking = explain(f, x, explainer, shapley, thr=thr, sample_ref=sample_ref)
    t2 = time.perf_counter()
    filtered = root_cause(ranking, spec)
    label = classify(filtered, spec) if mode == CLASSIFICATION else None
    return DiagnosisReport(sample_ref, True, mode, scored, label, filtered, explainer,
                           {"detect": t1 - t0, "explain": t2 - t1})
