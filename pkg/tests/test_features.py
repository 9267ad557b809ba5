import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vibro_ad.errors import DegenerateSignal, InvalidSpec
from vibro_ad.features import (
    FeatureDef,
    FeatureSpec,
    FeatureTable,
    FeatureVector,
    ScalingParams,
    bearing_spec,
    extract,
    extract_table,
    gearbox_spec,
    harmonic_spec,
    kurtosis,
    rms,
    standardize,
    unstandardize,
)
from vibro_ad.signal import VibrationSignal
from vibro_ad.synth import Amplitudes, MachineParams, SynthFaultSpec, generate

BEARING = MachineParams(fr_hz=33.3, bpfo_hz=236.4, bpfi_hz=296.9, bsf_hz=139.9, resonance_hz=4000.0)
FS_B, N_B = 20000.0, 20480


def bearing_case_spec():
    return bearing_spec(236.4, 296.9, 139.9, df=FS_B / N_B, envelope_band=(3000.0, 5000.0))


def sine(n=4096, periods=16):
    return np.sin(2 * np.pi * periods * np.arange(n) / n)


class TestStatistics:
    def test_rms_examples(self):
        assert rms(VibrationSignal(sine(), 1.0)) == pytest.approx(1 / np.sqrt(2), abs=1e-4)
        assert rms(VibrationSignal(np.full(10, 3.0), 1.0)) == pytest.approx(3.0)
        assert rms(VibrationSignal([1.0, -1.0, 1.0, -1.0], 1.0)) == 1.0

    def test_kurtosis_examples(self):
        g = np.random.default_rng(0).normal(size=100_000)
        assert kurtosis(VibrationSignal(g, 1.0)) == pytest.approx(3.0, abs=0.1)
        assert kurtosis(VibrationSignal([1.0, -1.0, 1.0, -1.0], 1.0)) == pytest.approx(1.0)
        assert kurtosis(VibrationSignal(sine(), 1.0)) == pytest.approx(1.5, abs=0.01)

    def test_kurtosis_zero_variance(self):
        with pytest.raises(DegenerateSignal):
            kurtosis(VibrationSignal(np.zeros(32), 1.0))
        with pytest.raises(DegenerateSignal):
            kurtosis(VibrationSignal(np.full(32, 7.0), 1.0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 100.0), st.floats(-50.0, 50.0))
    def test_kurtosis_affine_invariant(self, seed, scale, shift):
        x = np.random.default_rng(seed).normal(size=256)
        a = kurtosis(VibrationSignal(x, 1.0))
        b = kurtosis(VibrationSignal(scale * x + shift, 1.0))
        assert b == pytest.approx(a, rel=1e-6)


class TestSpecs:
    def test_tag_partition_on_builtin_specs(self):
        for spec in (bearing_case_spec(), gearbox_spec(20.0, 400.0, 1000.0), harmonic_spec(28.6, df=0.5)):
            g, s = set(spec.general_names), set(spec.specific_names)
            assert g.isdisjoint(s) and g | s == set(spec.names)
            assert all(spec[n].fault_labels for n in s)

    def test_bearing_labels(self):
        spec = bearing_case_spec()
        assert spec.names == ("kurtosis", "rms", "BPFI", "BPFO", "BSF")
        assert spec["BPFO"].fault_labels == ("outer race",)
        assert spec.single_fault
        assert not harmonic_spec(28.6, df=0.5).single_fault

    def test_json_round_trip(self, tmp_path):
        spec = bearing_case_spec()
        spec.save(tmp_path / "s.json")
        assert FeatureSpec.load(tmp_path / "s.json") == spec
        assert FeatureSpec.from_dict(harmonic_spec(30.0, df=0.5).to_dict()) == harmonic_spec(30.0, df=0.5)

    @pytest.mark.parametrize("entries", [
        (FeatureDef("a", "time_stat", {"statistic": "rms"}), FeatureDef("a", "time_stat", {"statistic": "rms"})),
        (FeatureDef("x", "band_energy", {"center_hz": 10.0, "half_width_hz": 1.0}, "specific"),),
        (FeatureDef("x", "band_energy", {"center_hz": 10.0, "half_width_hz": 1.0}, "general", "ball"),),
        (FeatureDef("x", "time_stat", {"statistic": "skew"}),),
        (FeatureDef("x", "band_energy", {"center_hz": 10.0, "half_width_hz": 0.0}),),
        (FeatureDef("x", "wavelet", {}),),
        (),
    ])
    def test_invalid_specs(self, entries):
        with pytest.raises(InvalidSpec):
            FeatureSpec(entries)

    def test_bad_json(self, tmp_path):
        (tmp_path / "s.json").write_text("{not json")
        with pytest.raises(InvalidSpec):
            FeatureSpec.load(tmp_path / "s.json")
        with pytest.raises(InvalidSpec):
            FeatureSpec.from_dict({"window": "hann"})


class TestExtract:
    def test_unbalance_argmax(self):
        fs, n = 2048.0, 4096
        spec = harmonic_spec(28.625, df=fs / n)
        sig = generate(SynthFaultSpec("unbalance", 1.0, MachineParams(fr_hz=28.625), seed=3), n, fs)
        v = extract(sig, spec)
        harm = [v[f"{h}xfr"] for h in (1, 2, 3, 4)]
        assert int(np.argmax(harm)) == 0
        assert harm[0] > max(harm[1:])

    def test_noise_has_no_dominant_defect(self):
        spec = bearing_case_spec()
        energies = []
        for seed in range(100):
            sig = generate(SynthFaultSpec("none", 0.0, BEARING, seed=seed), N_B, FS_B)
            v = extract(sig, spec)
            energies.append([v["BPFO"], v["BPFI"], v["BSF"]])
        # single draws are chi-square-like over a handful of bins, so the check is on the mean
        # energy per band; the bands differ in width, which accounts for a factor of about 2
        mean = np.mean(energies, axis=0)
        assert mean.max() <= 3 * mean.min()

    def test_silent_signal(self):
        with pytest.raises(DegenerateSignal):
            extract(VibrationSignal(np.zeros(N_B), FS_B), bearing_case_spec())

    def test_band_above_nyquist(self):
        spec = FeatureSpec((FeatureDef("hi", "band_energy", {"center_hz": 600.0, "half_width_hz": 2.0}),))
        with pytest.raises(InvalidSpec):
            extract(VibrationSignal(np.ones(1024), 1000.0), spec)

    def test_deterministic_bit_for_bit(self):
        sig = generate(SynthFaultSpec("outer_race", 1.0, BEARING, seed=1), N_B, FS_B)
        a = extract(sig, bearing_case_spec()).values
        b = extract(sig, bearing_case_spec()).values
        assert a.tobytes() == b.tobytes()

    def test_bpfo_monotone_in_impulse_amplitude(self):
        spec = bearing_case_spec()
        base = [extract(generate(SynthFaultSpec("none", 0.0, BEARING, seed=s), N_B, FS_B), spec)["BPFI"]
                for s in range(30)]
        hi = np.mean(base) + 4 * np.std(base)
        bpfo, bpfi = [], []
        for amp in (0.5, 1.0, 1.5, 2.0, 2.5):
            sig = generate(SynthFaultSpec("outer_race", 1.0, BEARING, seed=11,
                                          amplitudes=Amplitudes(impulse=amp)), N_B, FS_B)
            v = extract(sig, spec)
            bpfo.append(v["BPFO"])
            bpfi.append(v["BPFI"])
        assert np.all(np.diff(bpfo) > 0)
        assert max(bpfi) <= hi

    def test_extract_table(self):
        sigs = [VibrationSignal(np.random.default_rng(i).normal(size=512), 512.0) for i in range(3)]
        spec = harmonic_spec(30.0, df=1.0)
        t = extract_table(sigs, spec, labels=[False, True, False])
        assert len(t) == 3 and t.names == spec.names
        assert t.labels.tolist() == [False, True, False]


class TestTables:
    def test_vector_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FeatureVector(("a", "b"), [1.0, np.inf])

    def test_labels_align(self):
        with pytest.raises(ValueError):
            FeatureTable(("a",), np.zeros((3, 1)), [True])

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        t = FeatureTable(("a", "b"), rng.normal(size=(5, 2)), rng.random(5) > 0.5)
        t.to_csv(tmp_path / "t.csv")
        back = FeatureTable.from_csv(tmp_path / "t.csv")
        assert back.names == t.names
        assert np.array_equal(back.values, t.values)
        assert np.array_equal(back.labels, t.labels)


class TestStandardize:
    def test_single_row(self):
        t = FeatureTable(("a", "b"), [[3.0, -2.0]])
        z, params = standardize(t, t)
        assert np.all(z.values == 0.0)
        assert params.zero_std.all()

    def test_definition(self):
        train = FeatureTable(("a",), [[8.0], [12.0]])  # mean 10, population std 2
        z, _ = standardize(train, FeatureTable(("a",), [[14.0]]))
        assert z.values[0, 0] == pytest.approx(2.0)

    def test_empty_train(self):
        with pytest.raises(ValueError):
            standardize(FeatureTable(("a",), np.empty((0, 1))), FeatureTable(("a",), [[1.0]]))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 5)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)))
    def test_round_trip(self, x):
        t = FeatureTable(tuple(f"f{i}" for i in range(x.shape[1])), x)
        z, params = standardize(t, t)
        back = unstandardize(z, params)
        assert np.allclose(back.values, x, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(x).max()))

    def test_identity_params(self):
        p = ScalingParams.identity(3)
        x = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(p.apply(x), x)
