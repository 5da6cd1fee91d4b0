from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lesionbench.dataset import LesionClass
from lesionbench.errors import MaskShapeError
from lesionbench.masks import BinaryMask
from lesionbench.metrics import (
    ConfusionCounts,
    confusion_counts,
    dice,
    evaluate_pair,
    iou,
    pixel_accuracy,
    read_records_csv,
    write_records_csv,
)


def set_oracle(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """Brute-force pixel-set computation of (dice, iou, accuracy).

    Builds explicit coordinate sets with Python loops; shares no code with the
    implementation under test.
    """
    p_set, g_set = set(), set()
    h, w = pred.shape
    correct = 0
    for r in range(h):
        for c in range(w):
            if pred[r][c]:
                p_set.add((r, c))
            if gt[r][c]:
                g_set.add((r, c))
            if bool(pred[r][c]) == bool(gt[r][c]):
                correct += 1
    inter = len(p_set & g_set)
    union = len(p_set | g_set)
    d = 2 * inter / (len(p_set) + len(g_set)) if (p_set or g_set) else 1.0
    j = inter / union if union else 1.0
    return d, j, correct / (h * w)


def test_identical_masks_perfect_scores():
    data = np.zeros((4, 4), dtype=np.uint8)
    data[1:3, 1:3] = 1
    data[0, 0] = 1
    mask = BinaryMask(data)
    c = confusion_counts(mask, mask)
    assert (c.tp, c.fp, c.fn, c.tn) == (5, 0, 0, 11)
    assert pixel_accuracy(c) == 1.0 and iou(c) == 1.0 and dice(c) == 1.0


def test_complement_masks_zero_scores():
    data = np.zeros((4, 4), dtype=np.uint8)
    data[:2] = 1
    gt = BinaryMask(data)
    pred = BinaryMask(1 - data)
    c = confusion_counts(pred, gt)
    assert c.tp == 0 and c.tn == 0
    assert pixel_accuracy(c) == 0.0 and iou(c) == 0.0 and dice(c) == 0.0


def test_partial_overlap_counts_and_scores():
    # gt: 4 px at rows 0-1 cols 0-1; pred: 4 px at rows 0-1 cols 1-2 -> overlap 2
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[0:2, 0:2] = 1
    pred = np.zeros((4, 4), dtype=np.uint8)
    pred[0:2, 1:3] = 1
    c = confusion_counts(BinaryMask(pred), BinaryMask(gt))
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 2, 2, 10)
    assert pixel_accuracy(c) == 12 / 16
    assert iou(c) == pytest.approx(2 / 6)
    assert dice(c) == 4 / 8


def test_dimension_mismatch_rejected():
    a = BinaryMask(np.zeros((3, 3), dtype=np.uint8))
    b = BinaryMask(np.zeros((3, 4), dtype=np.uint8))
    with pytest.raises(MaskShapeError):
        confusion_counts(a, b)


def test_both_empty_convention():
    empty = BinaryMask(np.zeros((3, 3), dtype=np.uint8))
    c = confusion_counts(empty, empty)
    assert iou(c) == 1.0 and dice(c) == 1.0
    record = evaluate_pair(empty, empty, "x", LesionClass.NV)
    assert record.degenerate


def test_empty_pred_nonempty_gt_scores_zero():
    empty = BinaryMask(np.zeros((3, 3), dtype=np.uint8))
    data = np.zeros((3, 3), dtype=np.uint8)
    data[1, 1] = 1
    c = confusion_counts(empty, BinaryMask(data))
    assert iou(c) == 0.0 and dice(c) == 0.0


def test_disjoint_nonempty_dice_zero():
    a = np.zeros((4, 4), dtype=np.uint8)
    a[0, 0] = 1
    b = np.zeros((4, 4), dtype=np.uint8)
    b[3, 3] = 1
    assert dice(confusion_counts(BinaryMask(a), BinaryMask(b))) == 0.0


def test_evaluate_pair_matches_set_oracle_on_random_masks():
    rng = np.random.default_rng(21)
    for _ in range(200):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        pred = rng.integers(0, 2, size=(h, w)).astype(np.uint8)
        gt = rng.integers(0, 2, size=(h, w)).astype(np.uint8)
        record = evaluate_pair(BinaryMask(pred), BinaryMask(gt), "r", LesionClass.MEL)
        d, j, acc = set_oracle(pred, gt)
        assert record.dice == d and record.iou == j and record.pixel_accuracy == acc


counts_strategy = st.tuples(
    st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500)
)


@settings(max_examples=300, deadline=None)
@given(counts_strategy)
def test_dice_iou_identity_and_ordering(counts):
    tp, fp, fn, tn = counts
    c = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    d, j = dice(c), iou(c)
    assert 0.0 <= j <= d <= 1.0
    assert abs(d - 2 * j / (1 + j)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(
    pred=arrays(np.uint8, (6, 7), elements=st.integers(0, 1)),
    gt=arrays(np.uint8, (6, 7), elements=st.integers(0, 1)),
)
def test_swap_symmetry(pred, gt):
    a = confusion_counts(BinaryMask(pred), BinaryMask(gt))
    b = confusion_counts(BinaryMask(gt), BinaryMask(pred))
    assert dice(a) == dice(b)
    assert iou(a) == iou(b)
    assert pixel_accuracy(a) == pixel_accuracy(b)


def test_translation_invariance_of_overlap_scores():
    rng = np.random.default_rng(5)
    pred = rng.integers(0, 2, size=(6, 6)).astype(np.uint8)
    gt = rng.integers(0, 2, size=(6, 6)).astype(np.uint8)
    pad_pred = np.zeros((10, 10), dtype=np.uint8)
    pad_gt = np.zeros((10, 10), dtype=np.uint8)
    pad_pred[3:9, 2:8] = pred
    pad_gt[3:9, 2:8] = gt
    base = confusion_counts(BinaryMask(pred), BinaryMask(gt))
    moved = confusion_counts(BinaryMask(pad_pred), BinaryMask(pad_gt))
    assert dice(base) == dice(moved)
    assert iou(base) == iou(moved)
    # padding adds only true negatives
    assert moved.tn - base.tn == 100 - 36


def test_records_csv_round_trip_full_precision(tmp_path):
    records = [
        evaluate_pair(
            BinaryMask(np.eye(5, dtype=np.uint8)),
            BinaryMask(np.ones((5, 5), dtype=np.uint8)),
            f"id_{i}",
            LesionClass.DF,
        )
        for i in range(3)
    ]
    path = tmp_path / "records.csv"
    write_records_csv(records, path)
    loaded = read_records_csv(path)
    assert [(r.image_id, r.dice, r.iou, r.pixel_accuracy) for r in loaded] == [
        (r.image_id, r.dice, r.iou, r.pixel_accuracy) for r in records
    ]
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "image_id,lesion_class,dice,iou,pixel_accuracy"
