import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from conftest import random_pairs, tiny_config
from nuclass.autodiff import ConfigError, ShapeError
from nuclass.detsim import FormatError
from nuclass.model import build_model, desk_config
from nuclass.trainer import (
    CheckpointVersionError,
    EarlyStopping,
    SiameseCNNClassifier,
    SplitError,
    TrainConfig,
    TrainingDivergence,
    evaluate_loss,
    fit_arrays,
    load_checkpoint,
    save_checkpoint,
    split_dataset,
    stopping_epoch,
    stratified_counts,
    train,
)
from nuclass.trainer.checkpoint import encode_checkpoint


def toy_data(rng, n=30, size=16):
    """Label = which view carries a bright patch (XZ, YZ, or both); learnable in a few epochs."""
    X = rng.random((n, 2, size, size)) * 0.05
    y = np.arange(n) % 3
    for i, c in enumerate(y):
        r, col = rng.integers(0, size - 4, size=2)
        views = {0: [0], 1: [1], 2: [0, 1]}[int(c)]
        X[i, views, r:r + 4, col:col + 4] += 1.0
    return X, y


# ------------------------------------------------------------------ config

def test_defaults():
    c = TrainConfig()
    assert (c.lr, c.batch_size, c.max_epochs, c.patience) == (1e-6, 16, 300, 10)
    assert c.fractions == (0.90, 0.05, 0.05)
    assert TrainConfig.desk().lr == 1e-3


@pytest.mark.parametrize("kw", [dict(lr=0), dict(batch_size=0), dict(patience=0),
                                dict(fractions=(0.5, 0.4)), dict(fractions=(1.0, 0.0)),
                                dict(dtype="float16"), dict(max_epochs=1.5)])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


# ------------------------------------------------------------------ split

def test_split_sizes_1000():
    parts = split_dataset(np.arange(1000) % 3, (0.90, 0.05, 0.05), 0)
    assert [len(p) for p in parts] == [900, 50, 50]


def test_split_desk_sizes():
    parts = split_dataset(np.arange(3600) % 3, (5 / 6, 1 / 12, 1 / 12), 7)
    assert [len(p) for p in parts] == [3000, 300, 300]


def test_split_deterministic_and_partition():
    y = np.arange(500) % 3
    a = split_dataset(y, (0.8, 0.1, 0.1), 3)
    assert a == split_dataset(y, (0.8, 0.1, 0.1), 3)
    assert a != split_dataset(y, (0.8, 0.1, 0.1), 4)
    assert sorted(sum(map(list, a), [])) == list(range(500))


def test_split_accepts_manifest_entries():
    entries = [{"class": c} for c in ["NuE_CC", "NuMu_CC", "NC"] * 10]
    parts = split_dataset(entries, (0.8, 0.1, 0.1), 0)
    assert [len(p) for p in parts] == [24, 3, 3]


def test_empty_split_errors():
    with pytest.raises(SplitError):
        split_dataset(np.arange(10) % 3, (0.90, 0.05, 0.05), 0)


@given(st.lists(st.integers(0, 2), min_size=60, max_size=400), st.integers(0, 1000),
       st.sampled_from([(0.9, 0.05, 0.05), (0.8, 0.1, 0.1), (5 / 6, 1 / 12, 1 / 12),
                        (0.6, 0.2, 0.2), (0.5, 0.5)]))
def test_split_stratified_within_one(labels, seed, fractions):
    y = np.array(labels)
    parts = split_dataset(y, fractions, seed)
    n = len(y)
    for part in parts:
        counts = np.bincount(y[part], minlength=3)
        for c in range(3):
            quota = np.sum(y == c) * len(part) / n
            assert abs(counts[c] - quota) < 1 + 1e-9


def test_stratified_counts_case_that_breaks_per_split_rounding():
    table = stratified_counts([334, 333, 333], [900, 50, 50])
    assert table.sum(axis=1).tolist() == [334, 333, 333]
    assert table.sum(axis=0).tolist() == [900, 50, 50]


# ------------------------------------------------------------------ early stopping

def test_plateau_from_k_stops_at_k_plus_patience():
    for k in (1, 3, 17):
        losses = [10.0 - i for i in range(k)] + [10.0 - k + 1] * 50
        assert stopping_epoch(losses, patience=10) == k + 10


def test_improvement_needs_min_delta():
    losses = [1.0] + [1.0 - 9e-8 * i for i in range(1, 30)]
    assert stopping_epoch(losses, patience=10) == 11


@given(st.lists(st.floats(0, 10), min_size=1, max_size=60), st.integers(1, 12))
def test_stop_rule_matches_definition(losses, patience):
    stop = stopping_epoch(losses, patience)
    best, best_epoch, expected = np.inf, 0, None
    for e, v in enumerate(losses, start=1):
        if v < best - 1e-6:
            best, best_epoch = v, e
        if e - best_epoch >= patience:
            expected = e
            break
    assert stop == expected


def test_injected_evaluator_plateau(tiny, rng):
    X, y = toy_data(rng, 12)
    k = 4
    seq = [5.0, 4.0, 3.0, 2.0] + [2.0] * 40

    def fake(model, epoch):
        return seq[epoch - 1], 0.5

    _, hist = fit_arrays(build_model(tiny), X, y, None, None,
                         TrainConfig.desk(max_epochs=40, batch_size=6), evaluator=fake)
    assert hist.stop_epoch == k + 10 and hist.stop_reason == "patience"
    assert hist.best_epoch == k and hist.best_val_loss == 2.0


def test_best_checkpoint_returned(tiny, rng):
    X, y = toy_data(rng, 12)
    seq = [3.0, 1.0, 2.0, 2.5]
    snapshots = {}

    def fake(model, epoch):
        snapshots[epoch] = model.state_dict()
        return seq[epoch - 1], 0.0

    m, hist = fit_arrays(build_model(tiny), X, y, None, None,
                         TrainConfig.desk(max_epochs=4, batch_size=6), evaluator=fake)
    assert hist.stop_reason == "max_epochs" and hist.best_epoch == 2
    assert all(np.array_equal(m.state_dict()[k], snapshots[2][k]) for k in snapshots[2])


def test_best_val_loss_equals_min_recorded(tiny, rng):
    X, y = toy_data(rng, 30)
    m, hist = fit_arrays(build_model(tiny), X[:24], y[:24], X[24:], y[24:],
                         TrainConfig.desk(max_epochs=4, batch_size=8))
    assert hist.best_val_loss == min(hist.val_loss)
    assert evaluate_loss(m, X[24:], y[24:])[0] == pytest.approx(hist.best_val_loss, rel=1e-12)


def test_one_epoch_reduces_loss_on_ten_samples(tiny, rng):
    X, y = toy_data(rng, 10)
    m = build_model(tiny)
    before = evaluate_loss(m, X, y)[0]
    fit_arrays(m, X, y, X, y, TrainConfig.desk(max_epochs=1, batch_size=2))
    assert evaluate_loss(m, X, y)[0] < before


def test_training_learns_toy_task(tiny, rng):
    X, y = toy_data(rng, 60)
    m, hist = train(build_model(tiny), (X, y), TrainConfig.desk(max_epochs=60, batch_size=8,
                                                                fractions=(0.7, 0.3)))
    assert hist.train_loss[-1] < hist.train_loss[0]
    assert max(hist.val_accuracy) >= 0.9


def test_training_reproducible(tiny, rng):
    X, y = toy_data(rng, 24)
    cfg = TrainConfig.desk(max_epochs=3, batch_size=8, fractions=(0.75, 0.25), seed=5)
    a, ha = train(build_model(tiny.replace(dropout=0.3)), (X, y), cfg)
    b, hb = train(build_model(tiny.replace(dropout=0.3)), (X, y), cfg)
    assert ha.summary() == hb.summary()
    assert encode_checkpoint(a) == encode_checkpoint(b)


def test_nan_loss_aborts(tiny, rng):
    X, y = toy_data(rng, 12)
    m = build_model(tiny)
    m.params["head.out.bias"].data[0] = np.nan
    with pytest.raises(TrainingDivergence, match="epoch 1, batch 0"):
        fit_arrays(m, X, y, X, y, TrainConfig.desk(max_epochs=2))


def test_train_checks_inputs(tiny, rng):
    X, y = toy_data(rng, 12, size=8)
    with pytest.raises(ShapeError):
        train(build_model(tiny), (X, y), TrainConfig.desk())
    with pytest.raises(ValueError):
        train(build_model(tiny), (X[:0], y[:0]), TrainConfig.desk())


def test_history_jsonl(tiny, rng):
    X, y = toy_data(rng, 12)
    _, hist = fit_arrays(build_model(tiny), X, y, X, y, TrainConfig.desk(max_epochs=2))
    lines = hist.to_jsonl().splitlines()
    assert len(lines) == 2 and '"val_loss"' in lines[0] and '"seconds"' in lines[0]


# ------------------------------------------------------------------ checkpoints

def test_checkpoint_roundtrip_bit_exact(tmp_path, tiny, rng):
    m = build_model(tiny)
    X = random_pairs(rng, 3)
    save_checkpoint(m, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == m.config
    assert all(np.array_equal(a.data, b.data) for a, b in zip(m.parameters(), back.parameters()))
    assert np.array_equal(m.forward(X).data, back.forward(X).data)
    save_checkpoint(back, tmp_path / "n.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "n.ckpt").read_bytes()


def test_checkpoint_float32(tmp_path, tiny):
    m = build_model(tiny, dtype=np.float32)
    save_checkpoint(m, tmp_path / "m.ckpt")
    assert load_checkpoint(tmp_path / "m.ckpt").dtype == np.float32


def test_checkpoint_bad_magic(tmp_path, tiny):
    blob = bytearray(encode_checkpoint(build_model(tiny)))
    blob[0:4] = b"ABCD"
    (tmp_path / "x.ckpt").write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "x.ckpt")


def test_checkpoint_version_and_hash(tmp_path, tiny):
    blob = bytearray(encode_checkpoint(build_model(tiny)))
    wrong_version = bytes(blob[:4]) + (2).to_bytes(2, "little") + bytes(blob[6:])
    (tmp_path / "v.ckpt").write_bytes(wrong_version)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(tmp_path / "v.ckpt")
    tampered = bytes(blob).replace(b'"dropout":0.2', b'"dropout":0.3')
    (tmp_path / "h.ckpt").write_bytes(tampered)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(tmp_path / "h.ckpt")
    (tmp_path / "ok.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(tmp_path / "ok.ckpt", expected_hash=desk_config().config_hash())


def test_checkpoint_truncated(tmp_path, tiny):
    blob = encode_checkpoint(build_model(tiny))
    (tmp_path / "t.ckpt").write_bytes(blob[:-8])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "t.ckpt")


def test_checkpoint_write_leaves_no_temp_files(tmp_path, tiny):
    save_checkpoint(build_model(tiny), tmp_path / "m.ckpt")
    assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]


# ------------------------------------------------------------------ estimator

def test_estimator_api(rng):
    X, y = toy_data(rng, 45)
    clf = SiameseCNNClassifier(model_config=tiny_config(), max_epochs=60, patience=60,
                               batch_size=8, validation_fraction=0.2, seed=1)
    params = clf.get_params()
    assert params["max_epochs"] == 60 and params["lr"] == 1e-3
    assert clone(clf).get_params()["seed"] == 1
    clf.fit(X, y)
    proba = clf.predict_proba(X)
    assert proba.shape == (45, 3) and np.allclose(proba.sum(axis=1), 1)
    assert np.array_equal(clf.predict(X), proba.argmax(axis=1))
    assert clf.score(X, y) >= 0.8
    assert clf.decision_function(X).shape == (45, 3)


def test_estimator_eval_set_and_unfitted(rng):
    X, y = toy_data(rng, 24)
    clf = SiameseCNNClassifier(model_config=tiny_config(), max_epochs=2)
    with pytest.raises(Exception):
        clf.predict(X)
    clf.fit(X[:18], y[:18], eval_set=(X[18:], y[18:]))
    assert len(clf.history_.epochs) == 2
    with pytest.raises(ValueError):
        clf.fit(X, np.full(24, 5))
