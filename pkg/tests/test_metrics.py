"""Confusion tallies and F-scores against hand-counted and sklearn oracles."""

import numpy as np
import pytest
from sklearn.metrics import f1_score

from hypnolearn.metrics import (
    ConfusionMatrix,
    confusion,
    f1_macro,
    f1_weighted,
    format_confusion_csv,
    per_class_f1,
)


def test_accuracy_seven_of_ten():
    truths = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]
    preds = [0, 0, 0, 1, 1, 1, 2, 2, 2, 0]  # 7 agree
    assert confusion(preds, truths).accuracy == pytest.approx(0.7)


def test_per_class_f1_hand_case():
    # actual 0: both right; actual 1: one right, one to S2; actual 2: one to S1
    truths = [0, 0, 1, 1, 2]
    preds = [0, 0, 1, 2, 1]
    cm = confusion(preds, truths)
    np.testing.assert_allclose(per_class_f1(cm), [1.0, 0.5, 0.0, 0.0, 0.0])
    assert f1_macro(cm) == pytest.approx(0.3)
    # support-weighted: (1.0*2 + 0.5*2) / 5
    assert f1_weighted(cm) == pytest.approx(0.6)


def test_counts_land_in_actual_row_predicted_column():
    cm = confusion(preds=[3], truths=[1])
    assert cm.counts[1][3] == 1
    assert cm.counts.sum() == 1


def test_percent_rows_sum_to_hundred():
    rng = np.random.default_rng(5)
    cm = confusion(rng.integers(0, 5, 300), rng.integers(0, 5, 300))
    sums = cm.percent().sum(axis=1)
    np.testing.assert_allclose(sums, 100.0, atol=1e-9)


def test_percent_empty_row_stays_zero():
    cm = confusion(preds=[0, 0], truths=[0, 1])
    assert cm.percent()[4].tolist() == [0.0] * 5


def test_addition_merges_counts():
    a = confusion([0, 1], [0, 1])
    b = confusion([2], [2])
    merged = a + b
    assert merged.total == 3
    assert merged.accuracy == pytest.approx(1.0)


def test_matches_sklearn_f1_on_random_tallies():
    rng = np.random.default_rng(11)
    for _ in range(20):
        truths = rng.integers(0, 5, 80)
        preds = rng.integers(0, 5, 80)
        cm = confusion(preds, truths)
        expected_macro = f1_score(truths, preds, labels=range(5),
                                  average="macro", zero_division=0)
        expected_weighted = f1_score(truths, preds, labels=range(5),
                                     average="weighted", zero_division=0)
        assert f1_macro(cm) == pytest.approx(expected_macro)
        assert f1_weighted(cm) == pytest.approx(expected_weighted)


def test_empty_tally_rejected():
    with pytest.raises(ValueError, match="empty"):
        confusion([], [])


def test_length_mismatch_rejected():
    with pytest.raises(ValueError, match="mismatch"):
        confusion([0, 1], [0])


def test_out_of_range_label_rejected():
    with pytest.raises(ValueError):
        confusion([7], [0])


def test_csv_view_layout():
    cm = ConfusionMatrix(np.diag([1, 1, 1, 1, 2]).astype(np.int64))
    text = format_confusion_csv(cm)
    lines = text.strip().split("\n")
    assert len(lines) == 6
    assert lines[0].startswith("stage,")
    first = lines[1].split(",")
    assert first[1] == "100.000000"
