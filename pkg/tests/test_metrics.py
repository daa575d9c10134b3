import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imagedx.errors import EmptyMatrix, LengthMismatch
from imagedx.evaluation import (
    ConfusionMatrix,
    confusion_matrix,
    metrics_from_confusion,
    read_metrics_file,
    write_metrics_file,
)


def brute_force_metrics(truths, preds, num_classes):
    """Independent oracle: recount per sample, aggregate from definitions."""
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    support = [0] * num_classes
    for t, p in zip(truths, preds):
        support[t] += 1
        if t == p:
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        pr = tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] > 0 else 0.0
        rc = tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] > 0 else 0.0
        fs = 2 * pr * rc / (pr + rc) if pr + rc > 0 else 0.0
        precision.append(pr)
        recall.append(rc)
        f1.append(fs)
    n = len(truths)
    accuracy = sum(tp) / n
    macro = (
        sum(precision) / num_classes,
        sum(recall) / num_classes,
        sum(f1) / num_classes,
    )
    weighted = (
        sum(p * s for p, s in zip(precision, support)) / n,
        sum(r * s for r, s in zip(recall, support)) / n,
        sum(f * s for f, s in zip(f1, support)) / n,
    )
    return accuracy, precision, recall, f1, macro, weighted


def test_confusion_identity():
    truths = [3, 1, 4, 1, 5, 9, 2, 6]
    cm = confusion_matrix(truths, truths, num_classes=10)
    assert cm.trace() == len(truths)
    assert cm.total() == len(truths)
    off_diag = cm.counts - np.diag(np.diag(cm.counts))
    assert (off_diag == 0).all()


def test_confusion_hand_count():
    cm = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], num_classes=3)
    assert cm.counts[0].tolist() == [1, 1, 0]
    assert cm.counts[1].tolist() == [0, 2, 0]
    assert cm.counts[2].tolist() == [0, 0, 0]


def test_confusion_empty_inputs():
    cm = confusion_matrix([], [], num_classes=4)
    assert cm.total() == 0
    assert (cm.counts == 0).all()


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion_matrix([0, 1], [0], num_classes=3)
    with pytest.raises(IndexError):
        confusion_matrix([0, 3], [0, 1], num_classes=3)
    with pytest.raises(IndexError):
        confusion_matrix([0, -1], [0, 1], num_classes=3)


def test_perfect_predictions_metrics():
    cm = confusion_matrix([0, 1, 2, 1], [0, 1, 2, 1], num_classes=3)
    m = metrics_from_confusion(cm)
    assert m.accuracy == 1.0
    assert m.precision == m.recall == m.f1 == 1.0


def test_two_class_hand_computation():
    # [[8,2],[1,9]]: acc 17/20; p0=8/9, r0=0.8, p1=9/11, r1=0.9
    cm = ConfusionMatrix(np.array([[8, 2], [1, 9]]))
    m = metrics_from_confusion(cm)
    assert m.accuracy == pytest.approx(0.85)
    assert m.per_class[0].precision == pytest.approx(8 / 9)
    assert m.per_class[0].recall == pytest.approx(0.8)
    assert m.per_class[1].precision == pytest.approx(9 / 11)
    assert m.per_class[1].recall == pytest.approx(0.9)


def test_empty_matrix_raises():
    with pytest.raises(EmptyMatrix):
        metrics_from_confusion(ConfusionMatrix(np.zeros((3, 3), dtype=int)))


def test_zero_division_flagged():
    # class 2 never appears in truths or predictions
    cm = confusion_matrix([0, 1], [0, 1], num_classes=3)
    m = metrics_from_confusion(cm)
    assert 2 in m.zero_division_classes
    assert m.per_class[2].precision == 0.0
    assert m.per_class[2].recall == 0.0


def test_f1_is_harmonic_mean_per_class():
    rng = np.random.default_rng(0)
    cm = ConfusionMatrix(rng.integers(0, 20, (5, 5)))
    m = metrics_from_confusion(cm)
    for pc in m.per_class:
        if pc.precision + pc.recall > 0:
            expected = 2 * pc.precision * pc.recall / (pc.precision + pc.recall)
            assert pc.f1 == pytest.approx(expected, abs=1e-12)


def test_metrics_match_brute_force_oracle_on_200_instances():
    rng = np.random.default_rng(42)
    for _ in range(200):
        k = int(rng.integers(2, 26))
        n = int(rng.integers(1, 1001))
        truths = rng.integers(0, k, n).tolist()
        preds = rng.integers(0, k, n).tolist()
        cm = confusion_matrix(truths, preds, num_classes=k)
        m = metrics_from_confusion(cm)
        acc, precision, recall, f1, macro, weighted = brute_force_metrics(
            truths, preds, k
        )
        assert abs(m.accuracy - acc) < 1e-9
        for c in range(k):
            assert abs(m.per_class[c].precision - precision[c]) < 1e-9
            assert abs(m.per_class[c].recall - recall[c]) < 1e-9
            assert abs(m.per_class[c].f1 - f1[c]) < 1e-9
        assert abs(m.macro_precision - macro[0]) < 1e-9
        assert abs(m.macro_recall - macro[1]) < 1e-9
        assert abs(m.macro_f1 - macro[2]) < 1e-9
        assert abs(m.weighted_precision - weighted[0]) < 1e-9
        assert abs(m.weighted_recall - weighted[1]) < 1e-9
        assert abs(m.weighted_f1 - weighted[2]) < 1e-9
        # algebraic identity
        assert abs(m.weighted_recall - m.accuracy) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_weighted_recall_equals_accuracy_property(data):
    k = data.draw(st.integers(2, 10))
    truths = data.draw(st.lists(st.integers(0, k - 1), min_size=1, max_size=80))
    preds = data.draw(
        st.lists(st.integers(0, k - 1), min_size=len(truths), max_size=len(truths))
    )
    m = metrics_from_confusion(confusion_matrix(truths, preds, num_classes=k))
    assert abs(m.weighted_recall - m.accuracy) < 1e-12


def test_metrics_file_round_trip(tmp_path):
    truths = [0, 1, 2, 2, 1, 0, 2]
    preds = [0, 2, 2, 2, 1, 0, 1]
    cm = confusion_matrix(truths, preds, num_classes=3)
    metrics = metrics_from_confusion(cm, labels=["a", "b", "c"])
    metrics.loss = 0.731234
    out = tmp_path / "metrics.txt"
    write_metrics_file(out, metrics, cm, split="val")

    data = read_metrics_file(out)
    assert data["split"] == "val"
    assert data["samples"] == 7
    assert data["loss"] == pytest.approx(0.731234, abs=1e-6)
    assert data["accuracy"] == pytest.approx(metrics.accuracy, abs=1e-6)
    assert np.array_equal(np.array(data["matrix"]), cm.counts)
    assert data["per_class"][0]["label"] == "a"
    assert data["per_class"][2]["support"] == 3
