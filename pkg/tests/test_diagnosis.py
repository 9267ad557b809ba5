import json

import numpy as np
import pytest

from vibro_ad.detectors import DetectorConfig, ThresholdRule, fit
from vibro_ad.diagnosis import (
    AUTO,
    CLASSIFICATION,
    ROOT_CAUSE,
    DiagnosisReport,
    classify,
    diagnose,
    drop_general,
    resolve_mode,
    root_cause,
    to_json_lines,
)
from vibro_ad.errors import InvalidMode, InvalidSpec, NoSpecificFeatures, WrongAlgorithm
from vibro_ad.explain import LOCAL_DIFFI, SHAPLEY, ImportanceRanking, ShapleyConfig
from vibro_ad.features import FeatureDef, FeatureSpec, FeatureVector, bearing_spec, gearbox_spec, harmonic_spec

BEARING = bearing_spec(236.4, 296.9, 139.9, df=20000 / 20480, envelope_band=(3000.0, 5000.0))
GEARS = gearbox_spec(20.0, 400.0, 1000.0)
HARMONIC = harmonic_spec(28.625, df=0.5)


def rank(pairs, spec=BEARING):
    names = [n for n, _ in pairs]
    r = ImportanceRanking.from_weights(names, [w for _, w in pairs], SHAPLEY)
    assert r.names == tuple(names)
    return r


class TestFilters:
    def test_drop_general(self):
        r = rank([("rms", 5), ("BPFO", 4), ("BPFI", 3), ("kurtosis", 2), ("BSF", 1)])
        assert drop_general(r, BEARING).names == ("BPFO", "BPFI", "BSF")

    def test_only_general(self):
        spec = FeatureSpec((FeatureDef("rms", "time_stat", {"statistic": "rms"}),
                            FeatureDef("kurtosis", "time_stat", {"statistic": "kurtosis"})))
        with pytest.raises(NoSpecificFeatures):
            drop_general(rank([("rms", 2), ("kurtosis", 1)]), spec)

    def test_already_specific(self):
        spec = FeatureSpec((FeatureDef("a", "band_energy", {"center_hz": 10.0, "half_width_hz": 1.0}, "specific", "x"),
                            FeatureDef("b", "band_energy", {"center_hz": 20.0, "half_width_hz": 1.0}, "specific", "y")))
        r = rank([("b", 2), ("a", 1)])
        assert drop_general(r, spec).entries == r.entries

    def test_mismatched_features(self):
        with pytest.raises(InvalidSpec):
            drop_general(rank([("rms", 1.0), ("BPFO", 0.5)]), BEARING)


class TestClassify:
    def test_outer_race(self):
        assert classify(rank([("BPFO", 3), ("BPFI", 2), ("BSF", 1)]), BEARING) == "outer race"

    def test_gear_stage(self):
        r = rank([("1xGMF_1st", 9), ("kurtosis", 8), ("rms", 7), ("2xGMF_1st", 6), ("3xGMF_1st", 5),
                  ("4xGMF_1st", 4), ("1xGMF_2nd", 3), ("2xGMF_2nd", 2)])
        assert classify(r, GEARS) == "1st stage"

    def test_tie_goes_to_earlier_spec_entry(self):
        # BPFI precedes BPFO in the spec
        r = ImportanceRanking((("BPFO", 1.0), ("BPFI", 1.0), ("BSF", 0.5)), SHAPLEY)
        assert classify(r, BEARING) == "inner race"

    def test_root_cause(self):
        r = rank([("rms", 9), ("2xfr", 3), ("3xfr", 2), ("1xfr", 1), ("4xfr", 0)], HARMONIC)
        assert root_cause(r, HARMONIC).names == ("2xfr", "3xfr", "1xfr", "4xfr")
        zero = rank([("rms", 1), ("1xfr", 0), ("2xfr", 0), ("3xfr", 0), ("4xfr", 0)], HARMONIC)
        out = root_cause(zero, HARMONIC)
        assert out.degenerate and out.names == ("1xfr", "2xfr", "3xfr", "4xfr")


class TestModes:
    def test_resolve(self):
        assert resolve_mode(AUTO, BEARING) == CLASSIFICATION
        assert resolve_mode(AUTO, HARMONIC) == ROOT_CAUSE
        assert resolve_mode(ROOT_CAUSE, BEARING) == ROOT_CAUSE
        with pytest.raises(InvalidMode):
            resolve_mode(CLASSIFICATION, HARMONIC)
        with pytest.raises(InvalidMode):
            resolve_mode("guess", BEARING)

    def test_report_invariant(self):
        from vibro_ad.detectors import ScoredSample

        s = ScoredSample(1.0, 1.0, True, 0.5)
        with pytest.raises(ValueError):
            DiagnosisReport(0, True, ROOT_CAUSE, s, fault_label="ball")
        with pytest.raises(ValueError):
            DiagnosisReport(0, False, CLASSIFICATION, s, fault_label="ball")


def bearing_detector(seed=0, algo="IF"):
    rng = np.random.default_rng(seed)
    train = np.abs(rng.normal(1.0, 0.1, size=(150, 5)))
    return fit(DetectorConfig(algo, seed=seed), train, BEARING.names), train


class TestDiagnose:
    def test_normal_sample_short_circuits(self):
        f, train = bearing_detector()
        rep = diagnose(f, FeatureVector(BEARING.names, np.median(train, axis=0)), BEARING)
        assert not rep.detected and rep.fault_label is None and rep.filtered_ranking is None
        d = json.loads(rep.to_json())
        assert d["detected"] is False and "fault_label" not in d and "ranking" not in d

    def test_outer_race_anomaly(self):
        f, _ = bearing_detector()
        # a fault lifts the general features a little and its own band a lot
        x = np.full(5, 1.1)
        x[BEARING.index("BPFO")] = 6.0
        rep = diagnose(f, x, BEARING, rule=ThresholdRule.of_contamination(0.1), sample_ref="row-7")
        assert rep.detected and rep.mode == CLASSIFICATION and rep.fault_label == "outer race"
        assert rep.filtered_ranking.names[0] == "BPFO"
        assert set(rep.filtered_ranking.names) == {"BPFO", "BPFI", "BSF"}
        d = rep.to_dict()
        assert d["sample"] == "row-7" and d["explainer"] == LOCAL_DIFFI and "seconds" not in d
        assert "seconds" in rep.to_dict(include_timing=True)

    def test_shapley_with_other_detector(self):
        f, _ = bearing_detector(algo="kNN")
        x = np.ones(5)
        x[BEARING.index("BSF")] = 6.0
        rep = diagnose(f, x, BEARING, explainer=SHAPLEY, shapley=ShapleyConfig(n_permutations=32))
        assert rep.fault_label == "ball"
        assert rep.filtered_ranking.residual < 1e-9
        with pytest.raises(WrongAlgorithm):
            diagnose(f, x, BEARING, explainer=LOCAL_DIFFI)

    def test_root_cause_mode(self):
        rng = np.random.default_rng(1)
        f = fit(DetectorConfig("IF"), np.abs(rng.normal(1.0, 0.1, size=(150, 5))), HARMONIC.names)
        x = np.full(5, 1.1)
        x[HARMONIC.index("1xfr")] = 8.0
        rep = diagnose(f, x, HARMONIC, rule=ThresholdRule.of_contamination(0.1))
        assert rep.mode == ROOT_CAUSE and rep.fault_label is None
        assert rep.filtered_ranking.names[0] == "1xfr"
        with pytest.raises(InvalidMode):
            diagnose(f, x, HARMONIC, mode=CLASSIFICATION)

    def test_spec_mismatch(self):
        f, _ = bearing_detector()
        with pytest.raises(InvalidSpec):
            diagnose(f, np.ones(5), HARMONIC)

    def test_threshold_override_and_json_lines(self):
        f, train = bearing_detector()
        x = np.median(train, axis=0)
        forced = diagnose(f, x, BEARING, thr=-1.0)
        assert forced.detected
        contamination = diagnose(f, x, BEARING, rule=ThresholdRule.of_contamination(0.5))
        assert contamination.scored.threshold_used < f.train_max
        lines = to_json_lines([forced, contamination]).splitlines()
        assert len(lines) == 2 and all(json.loads(line)["mode"] == CLASSIFICATION for line in lines)
