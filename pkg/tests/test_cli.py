import json
import subprocess
import sys

import numpy as np
import pytest

from vibro_ad.cli import main, read_importance, read_reports, read_scores
from vibro_ad.detectors import load_model
from vibro_ad.features import FeatureTable
from vibro_ad.signal import write_signal_csv
from vibro_ad.synth import SynthFaultSpec, generate, resolve_params

BEARING_PARAMS = {"n_rows": 130, "onset": 115}


@pytest.fixture(scope="module")
def bearing_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bearing")
    assert main(["synth", "bearing_runto_failure", "--params", json.dumps(BEARING_PARAMS),
                 "--seed", "3", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def mech_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mech")
    params = {"counts": {"none": 60, "unbalance": 10, "misalignment": 10}, "n_samples": 2048}
    assert main(["synth", "mechanical_static", "--params", json.dumps(params), "--out", str(out)]) == 0
    return out


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


class TestSynth:
    def test_files_parse(self, bearing_dir):
        table = FeatureTable.from_csv(bearing_dir / "features.csv")
        truth = json.loads((bearing_dir / "truth.json").read_text())
        assert len(table) == 130 and truth["seed"] == 3 and truth["onset"] == 115
        assert (bearing_dir / "feature_spec.json").exists()

    def test_seed_in_params_is_echoed(self, tmp_path):
        params = {"counts": {"none": 3, "unbalance": 2}, "n_samples": 512, "seed": 11}
        assert main(["synth", "mechanical_static", "--params", json.dumps(params), "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "truth.json").read_text())["seed"] == 11

    def test_negative_counts(self, tmp_path, capsys):
        params = json.dumps({"counts": {"none": -2}})
        assert main(["synth", "mechanical_static", "--params", params, "--out", str(tmp_path)]) == 2
        assert error_line(capsys).startswith("INVALID_CONFIG: counts")


class TestExtract:
    def make_signals(self, directory, n=3):
        p = resolve_params("mechanical_static")
        directory.mkdir()
        for i in range(n):
            s = generate(SynthFaultSpec("unbalance" if i else "none", 1.0, p.machine, 1.0, i), 2048, p.sample_rate)
            write_signal_csv(s, directory / f"sig{i}.csv")

    def test_three_files(self, mech_dir, tmp_path):
        self.make_signals(tmp_path / "sig")
        spec = str(mech_dir / "feature_spec.json")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["extract", str(tmp_path / "sig"), "--spec", spec, "--out", str(a)]) == 0
        assert main(["extract", str(tmp_path / "sig"), "--spec", spec, "--out", str(b)]) == 0
        table = FeatureTable.from_csv(a)
        assert len(table) == 3 and table.names == ("rms", "1xfr", "2xfr", "3xfr", "4xfr")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_directory(self, mech_dir, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = main(["extract", str(tmp_path / "empty"), "--spec", str(mech_dir / "feature_spec.json"),
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2 and error_line(capsys).startswith("NO_INPUTS:")


class TestModelCommands:
    def test_fit_score_diagnose_explain(self, mech_dir, tmp_path):
        table, spec = str(mech_dir / "features.csv"), str(mech_dir / "feature_spec.json")
        model = tmp_path / "m.vadm"
        assert main(["fit", "--table", table, "--normal-only", "--seed", "1", "--out", str(model)]) == 0
        f = load_model(model)
        assert f.algorithm == "IF" and len(f.train_matrix) == 60

        scores = tmp_path / "scores.csv"
        assert main(["score", "--model", str(model), "--table", table, "--out", str(scores)]) == 0
        rows = read_scores(scores)
        assert len(rows) == 80 and rows[0]["label"] in ("normal", "anomaly")
        thr = float(rows[0]["threshold"])
        assert all((float(r["score"]) > thr) == (r["is_anomaly"] == "1") for r in rows)

        reports = tmp_path / "r.jsonl"
        assert main(["diagnose", "--model", str(model), "--table", table, "--spec", spec,
                     "--out", str(reports)]) == 0
        parsed = read_reports(reports)
        assert len(parsed) == 80 and all(r["mode"] == "root_cause_analysis" for r in parsed)
        assert all("seconds" not in r for r in parsed)
        assert any(r["detected"] for r in parsed)

        imp = tmp_path / "imp.csv"
        assert main(["explain", "--model", str(model), "--table", table, "--row", "0", "--row", "5",
                     "--method", "shapley", "--n-permutations", "8", "--out", str(imp)]) == 0
        ranked = read_importance(imp)
        assert set(ranked) == {"0", "5"} and len(ranked["0"]) == 5

    def test_explain_row_out_of_range(self, mech_dir, tmp_path, capsys):
        model = tmp_path / "m.vadm"
        main(["fit", "--table", str(mech_dir / "features.csv"), "--out", str(model)])
        capsys.readouterr()
        code = main(["explain", "--model", str(model), "--table", str(mech_dir / "features.csv"), "--row", "999"])
        assert code == 2 and error_line(capsys).startswith("INVALID:")

    def test_invalid_detector_name(self, mech_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"algorithm": "DeepSVDD"}))
        code = main(["fit", "--table", str(mech_dir / "features.csv"), "--config", str(cfg),
                     "--out", str(tmp_path / "m.vadm")])
        line = error_line(capsys)
        assert code == 2 and line.startswith("INVALID_CONFIG:") and "algorithm" in line

    def test_runtime_failure_exits_one(self, tmp_path, capsys):
        table = tmp_path / "flat.csv"
        FeatureTable(("a", "b"), np.ones((40, 2))).to_csv(table)
        cfg = tmp_path / "mcd.json"
        cfg.write_text(json.dumps({"algorithm": "MCD", "standardize": False}))
        code = main(["fit", "--table", str(table), "--config", str(cfg), "--out", str(tmp_path / "m.vadm")])
        assert code == 1 and error_line(capsys).startswith("SINGULAR_COVARIANCE:")

    def test_missing_table(self, tmp_path, capsys):
        assert main(["fit", "--table", str(tmp_path / "nope.csv")]) == 2
        assert error_line(capsys).startswith("NO_INPUTS:")

    def test_corrupt_model(self, mech_dir, tmp_path, capsys):
        bad = tmp_path / "bad.vadm"
        bad.write_bytes(b"VADM\x00garbage")
        code = main(["score", "--model", str(bad), "--table", str(mech_dir / "features.csv")])
        assert code == 2 and error_line(capsys).startswith("BAD_FORMAT:")

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit"])
        assert exc.value.code == 2 and error_line(capsys).startswith("USAGE:")


class TestEval:
    def test_static(self, mech_dir, tmp_path):
        out = tmp_path / "metrics.json"
        assert main(["eval", "--table", str(mech_dir / "features.csv"), "--iters", "3", "--seed", "2",
                     "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        assert len(d["per_iteration"]) == 3 and "f1" in d["aggregate"]
        assert out.with_suffix(".csv").exists()

    def test_dynamic(self, bearing_dir, tmp_path):
        out = tmp_path / "dyn.json"
        assert main(["eval", "--table", str(bearing_dir / "features.csv"), "--protocol", "dynamic",
                     "--iters", "2", "--init-n", "100", "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        assert len(d["per_iteration"]) == 2


def write_manifest(path, data_dir, out_dir, **extra):
    m = {"inputs": [str(data_dir / "features.csv")], "feature_spec": str(data_dir / "feature_spec.json"),
         "out_dir": str(out_dir), "seed": 4, **extra}
    path.write_text(json.dumps(m))
    return path


class TestRun:
    def test_sliding_manifest(self, bearing_dir, tmp_path):
        manifest = write_manifest(tmp_path / "m.json", bearing_dir, tmp_path / "out")
        assert main(["run", str(manifest)]) == 0
        out = tmp_path / "out"
        scores = read_scores(out / "anomaly_scores.csv")
        assert len(scores) == 30  # one row per sample after the 100-row warm-up
        assert len(read_scores(out / "anomaly_scores_all.csv")) == 130
        reports = read_reports(out / "reports.jsonl")
        assert len(reports) == 30
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["n_samples"] == 30 and metrics["f1"] > 0.8
        assert metrics["fault_labels"].get("outer race", 0) >= 10
        imp = read_importance(out / "importance.csv")
        assert set(imp) == {str(r["sample"]) for r in reports if "ranking" in r}

    def test_same_manifest_twice_is_identical(self, mech_dir, tmp_path):
        manifest = write_manifest(tmp_path / "m.json", mech_dir, tmp_path / "a",
                                  split={"kind": "static"}, explainer="shapley", n_permutations=8)
        assert main(["run", str(manifest)]) == 0
        assert main(["run", str(manifest), "--out", str(tmp_path / "b")]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        assert "model.vadm" in names
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_prefix_split(self, mech_dir, tmp_path):
        manifest = write_manifest(tmp_path / "m.json", mech_dir, tmp_path / "out", split={"kind": "prefix",
                                                                                           "n_train": 50})
        assert main(["run", str(manifest)]) == 0
        assert len(read_scores(tmp_path / "out" / "anomaly_scores.csv")) == 30

    def test_invalid_detector_in_manifest(self, mech_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"algorithm": "IF", "params": {"n_trees": 0}}))
        manifest = write_manifest(tmp_path / "m.json", mech_dir, tmp_path / "out", detector=str(cfg))
        assert main(["run", str(manifest)]) == 2
        assert "n_trees" in error_line(capsys)

    def test_bad_manifest_fields(self, mech_dir, tmp_path, capsys):
        for extra, field in (({"colour": 1}, "colour"), ({"split": {"kind": "kfold"}}, "split.kind"),
                             ({"mode": "guess"}, "mode")):
            manifest = write_manifest(tmp_path / "m.json", mech_dir, tmp_path / "out", **extra)
            assert main(["run", str(manifest)]) == 2
            line = error_line(capsys)
            assert line.startswith("INVALID_CONFIG:") and field in line
        manifest = write_manifest(tmp_path / "m.json", mech_dir, tmp_path / "out",
                                  inputs=[str(tmp_path / "missing.csv")])
        assert main(["run", str(manifest)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vibro_ad.cli", "score"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr.startswith("USAGE:")
