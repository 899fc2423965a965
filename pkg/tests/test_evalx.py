import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_pairs
from nuclass.autodiff import ShapeError
from nuclass.detsim import PixelMap
from nuclass.evalx import (
    SCALAR_COLUMNS,
    DegenerateClassError,
    PixelDownsampler,
    PredictionRecord,
    aggregate_metrics,
    confusion_matrices,
    downsample_pixelmap,
    emit_report,
    evaluate_model,
    evaluate_records,
    generalization_eval,
    pairwise_auc,
    read_metrics_csv,
    records_from_arrays,
    roc_auc,
    roc_curve,
)
from nuclass.model import build_model


def onehot_records(truth, pred):
    return [PredictionRecord(i, t, np.eye(3)[p]) for i, (t, p) in enumerate(zip(truth, pred))]


def test_perfect_predictions():
    recs = onehot_records([0, 1, 2, 1], [0, 1, 2, 1])
    conf = confusion_matrices(recs)
    assert np.array_equal(conf.recall, np.eye(3)) and np.array_equal(conf.precision, np.eye(3))
    assert all(v == 1.0 for v in aggregate_metrics(recs).values())


def test_hand_case():
    recs = onehot_records([0, 0, 1, 2], [0, 1, 1, 2])
    conf = confusion_matrices(recs)
    assert conf.recall[0].tolist() == [0.5, 0.5, 0.0]
    m = aggregate_metrics(recs)
    assert m["accuracy"] == 0.75
    assert m["macro_recall"] == pytest.approx(0.8333, abs=1e-4)
    assert m["micro_precision"] == m["micro_recall"] == 0.75


def test_empty_rows_and_columns_flagged():
    conf = confusion_matrices(onehot_records([0, 0, 1], [0, 1, 1]))
    assert conf.empty_rows == [2] and conf.empty_cols == [2]
    assert np.all(conf.recall[2] == 0) and np.all(conf.precision[:, 2] == 0)


def test_record_validation():
    with pytest.raises(ValueError):
        PredictionRecord(0, 1, [0.5, 0.6, 0.1])
    r = PredictionRecord(0, 1, [0.2, 0.3, 0.5])
    assert r.predicted == 2
    assert PredictionRecord(0, 1, [0.2, 0.3, 0.5], predicted=0).predicted == 0


@st.composite
def record_sets(draw, max_n=120):
    n = draw(st.integers(1, max_n))
    truth = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    raw = draw(st.lists(st.lists(st.integers(1, 5), min_size=3, max_size=3), min_size=n, max_size=n))
    scores = np.array(raw, dtype=float)
    scores /= scores.sum(axis=1, keepdims=True)
    return records_from_arrays(truth, scores)


@given(record_sets())
def test_micro_identity_and_normalization(recs):
    m = aggregate_metrics(recs)
    assert m["micro_precision"] == m["micro_recall"] == m["accuracy"]
    conf = confusion_matrices(recs)
    assert m["accuracy"] == np.trace(conf.counts) / conf.counts.sum()
    for i, row in enumerate(conf.recall):
        if i not in conf.empty_rows:
            assert abs(row.sum() - 1) < 1e-12
    for j, col in enumerate(conf.precision.T):
        if j not in conf.empty_cols:
            assert abs(col.sum() - 1) < 1e-12


def test_auc_examples():
    assert roc_curve([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])[3] == 1.0
    assert roc_curve([0.35, 0.8, 0.1, 0.4], [1, 1, 0, 0])[3] == 0.75
    assert roc_curve([0.5] * 6, [1, 0, 1, 0, 0, 1])[3] == 0.5


def test_roc_includes_infinite_endpoints():
    fpr, tpr, thr, _ = roc_curve([0.35, 0.8, 0.1, 0.4], [1, 1, 0, 0])
    assert thr[0] == np.inf and thr[-1] == -np.inf
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


def test_degenerate_class_named():
    recs = onehot_records([0, 0, 1], [0, 1, 1])
    with pytest.raises(DegenerateClassError, match="NC"):
        roc_auc(recs, 2)


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=500))
def test_auc_matches_pairwise_with_ties(pairs):
    scores = np.array([p[0] / 6 for p in pairs])
    pos = np.array([p[1] for p in pairs])
    if pos.all() or not pos.any():
        with pytest.raises(DegenerateClassError):
            roc_curve(scores, pos)
        return
    assert abs(roc_curve(scores, pos)[3] - pairwise_auc(scores, pos)) <= 1e-12


def test_downsample_examples():
    block = np.array([[0.2, 0.4], [0.6, 0.8]])
    assert downsample_pixelmap(block, 2)[0, 0] == pytest.approx(0.5)
    pm = PixelMap("XZ", np.arange(16, dtype=np.float32).reshape(4, 4))
    assert downsample_pixelmap(pm, 1) is pm
    with pytest.raises(ValueError):
        downsample_pixelmap(np.zeros((6, 6)), 4)
    with pytest.raises(ValueError):
        downsample_pixelmap(np.zeros((4, 4)), 0)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4, 8]))
def test_downsample_preserves_mean(seed, factor):
    img = np.random.default_rng(seed).random((16, 16)).astype(np.float32)
    pooled = downsample_pixelmap(img, factor)
    a = math.fsum(img.astype(np.float64).ravel()) / img.size
    b = math.fsum(np.asarray(pooled, dtype=np.float64).ravel()) / pooled.size
    assert a == b


def test_downsampler_transformer(rng):
    X = random_pairs(rng, 2).astype(np.float32)
    re = PixelDownsampler(2).fit_transform(X)
    assert re.shape == X.shape and np.all(re[:, :, ::2, ::2] == re[:, :, 1::2, 1::2])
    direct = PixelDownsampler(2, mode="direct").transform(X)
    assert direct.shape == (2, 2, 8, 8)
    assert PixelDownsampler(1).transform(X) is X
    with pytest.raises(ValueError):
        PixelDownsampler(2, mode="blur").transform(X)


def test_generalization_factor_one_bit_identical(tiny, rng):
    m = build_model(tiny)
    X = random_pairs(rng, 30)
    y = np.arange(30) % 3
    assert generalization_eval(m, X, y, 1).equals(evaluate_model(m, X, y))
    r2 = generalization_eval(m, X, y, 2)
    assert r2.factor == 2 and set(r2.scalars()) == set(SCALAR_COLUMNS[:-2])
    with pytest.raises(ShapeError):
        generalization_eval(m, X, y, 2, mode="direct")


def test_emit_report_deterministic_and_parseable(tmp_path, rng):
    scores = rng.dirichlet([1, 1, 1], size=40)
    report = evaluate_records(records_from_arrays(np.arange(40) % 3, scores))
    a = emit_report(report, tmp_path / "a")
    b = emit_report(report, tmp_path / "b")
    for fa, fb in zip(a, b):
        assert fa.read_bytes() == fb.read_bytes()
    parsed = read_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert list(parsed) == list(SCALAR_COLUMNS)
    for k, v in report.scalars().items():
        assert parsed[k] == v
    roc = (tmp_path / "a" / "metrics_roc.csv").read_text().splitlines()
    assert roc[0] == "class,fpr,tpr,threshold" and roc[1].endswith(",inf")
    assert (tmp_path / "a" / "metrics.jsonl").read_text().count('"kind": "roc"') == sum(
        len(v) for v in report.roc.values())


def test_emit_report_unwritable(tmp_path, rng):
    report = evaluate_records(records_from_arrays([0, 1, 2], np.eye(3)))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(report, blocker / "sub")
