import numpy as np
import pytest

from vibro_ad.detectors import DetectorConfig, ThresholdRule, sliding_window_run
from vibro_ad.errors import InsufficientData
from vibro_ad.features import FeatureTable
from vibro_ad.synth import generate_dataset

RULE = ThresholdRule.max_train()


def table(x):
    x = np.asarray(x, dtype=float)
    return FeatureTable(tuple(f"f{i}" for i in range(x.shape[1])), x)


@pytest.mark.parametrize("algo", ["kNN", "IF", "HBOS"])
def test_constant_stream(algo):
    run = sliding_window_run(table(np.ones((150, 3))), DetectorConfig(algo), 100, RULE)
    assert not run.flags.any()
    assert len(run.training_rows) == 150
    assert len(run.samples) == 150 and run.warmup.sum() == 100


def test_bearing_stream_detects_onset():
    table_, truth = generate_dataset("bearing_runto_failure", {"n_rows": 150, "onset": 120}, seed=2)
    run = sliding_window_run(table_, DetectorConfig("IF", seed=0), 100, RULE)
    flagged = np.flatnonzero(run.flags & ~run.warmup)
    assert flagged.size and 120 <= flagged[0] < 130
    # rows flagged anomalous never join the training set
    assert not set(flagged) & set(run.training_rows.tolist())


def test_errors():
    x = table(np.random.default_rng(0).normal(size=(30, 2)))
    with pytest.raises(InsufficientData):
        sliding_window_run(x, DetectorConfig("LOF", {"k": 16}), 10, RULE)
    with pytest.raises(InsufficientData):
        sliding_window_run(x, DetectorConfig("kNN"), 31, RULE)
    with pytest.raises(ValueError):
        sliding_window_run(x, DetectorConfig("kNN"), 20, RULE, refit_every=0)


def test_refit_cadence_and_callback():
    x = np.random.default_rng(1).normal(size=(60, 2))
    seen = []
    run = sliding_window_run(table(x), DetectorConfig("kNN", {"k": 3}), 20, RULE, refit_every=5,
                             on_sample=lambda i, f, thr, s: seen.append((i, len(f.train_matrix))))
    assert [i for i, _ in seen] == list(range(20, 60))
    normal_added = len(run.training_rows) - 20
    assert run.n_refits == 1 + normal_added // 5
    # the model that scored row i was trained on a prefix of the accepted rows
    assert all(size >= 20 for _, size in seen)


def test_train_filter_controls_fitted_rows():
    x = np.random.default_rng(2).normal(size=(40, 2))
    sizes = []
    sliding_window_run(table(x), DetectorConfig("kNN", {"k": 3}), 20, RULE,
                       train_filter=lambda rows: rows[::2],
                       on_sample=lambda i, f, thr, s: sizes.append(len(f.train_matrix)))
    assert sizes[0] == 10
