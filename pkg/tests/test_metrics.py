from __future__ import annotations

import numpy as np
import pytest

from segbench import (
    IGNORE_LABEL,
    ConfusionMatrix,
    SegbenchError,
    accumulate,
    iou_per_class,
    merge,
    miou,
)
from segbench.metrics import breakdown

from conftest import mask_of


def set_based_iou(pred, gt, k):
    """Naive oracle: per-class intersection / union over pixel sets, with
    pixels dropped when either mask is ignore."""
    pairs = [
        (int(p), int(g))
        for p, g in zip(pred.ravel(), gt.ravel())
        if p != IGNORE_LABEL and g != IGNORE_LABEL
    ]
    per_class = []
    for c in range(k):
        inter = sum(1 for p, g in pairs if p == c and g == c)
        union = sum(1 for p, g in pairs if p == c or g == c)
        per_class.append(None if union == 0 else inter / union)
    defined = [v for v in per_class if v is not None]
    mean = sum(defined) / len(defined) if defined else None
    return per_class, mean


def random_mask_pair(rng, max_side=16, max_k=5):
    k = int(rng.integers(1, max_k + 1))
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    pool = list(range(k)) + [IGNORE_LABEL]
    pred = rng.choice(pool, size=(h, w)).astype(np.uint8)
    gt = rng.choice(pool, size=(h, w)).astype(np.uint8)
    return mask_of(pred, k), mask_of(gt, k), k


class TestAccumulate:
    def test_diagonal_only_when_equal(self):
        m = mask_of([[0, 0], [0, 0]], num_classes=2)
        cm = accumulate(ConfusionMatrix.zeros(2), m, m)
        assert cm.counts.tolist() == [[4, 0], [0, 0]]

    def test_hand_counted_pixels(self):
        pred = mask_of([[0, 0, 1, 1]], num_classes=2)
        gt = mask_of([[0, 1, 1, 1]], num_classes=2)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        assert cm.counts.tolist() == [[1, 0], [1, 2]]

    def test_ignore_pixels_are_skipped(self):
        gt = mask_of([[0, IGNORE_LABEL]], num_classes=2)
        pred = mask_of([[1, 1]], num_classes=2)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        assert cm.counts.tolist() == [[0, 1], [0, 0]]
        assert cm.total == 1

    def test_pred_ignore_also_skipped(self):
        gt = mask_of([[0, 0]], num_classes=2)
        pred = mask_of([[IGNORE_LABEL, 0]], num_classes=2)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        assert cm.total == 1

    def test_dimension_mismatch(self):
        with pytest.raises(SegbenchError, match="dimension"):
            accumulate(ConfusionMatrix.zeros(2), mask_of([[0]]), mask_of([[0, 1]]))

    def test_class_id_beyond_k(self):
        with pytest.raises(SegbenchError, match="num_classes"):
            accumulate(ConfusionMatrix.zeros(2), mask_of([[3]], num_classes=4), mask_of([[0]], num_classes=4))

    def test_total_equals_non_ignored_pixels(self, rng):
        for _ in range(20):
            pred, gt, k = random_mask_pair(rng)
            cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
            expected = int(
                ((pred.labels != IGNORE_LABEL) & (gt.labels != IGNORE_LABEL)).sum()
            )
            assert cm.total == expected


class TestIou:
    def test_hand_computed_breakdown(self):
        cm = ConfusionMatrix(counts=np.array([[1, 0], [1, 2]]))
        per_class = iou_per_class(cm)
        assert per_class[0] == 1 / (1 + 1 + 0)
        assert per_class[1] == 2 / (2 + 0 + 1)
        # oracle-computed mean of the two IoUs
        assert miou(cm) == (0.5 + 2 / 3) / 2

    def test_diagonal_matrix_scores_one(self):
        cm = ConfusionMatrix(counts=np.diag([5, 2, 9]))
        assert iou_per_class(cm) == [1.0, 1.0, 1.0]
        assert miou(cm) == 1.0

    def test_union_zero_class_is_undefined(self):
        cm = ConfusionMatrix(counts=np.array([[4, 0, 0], [0, 1, 0], [0, 0, 0]]))
        assert iou_per_class(cm)[2] is None
        assert miou(cm) == 1.0

    def test_complement_prediction_scores_zero(self):
        gt = mask_of([[0, 0], [1, 1]], num_classes=2)
        pred = mask_of([[1, 1], [0, 0]], num_classes=2)
        cm = accumulate(ConfusionMatrix.zeros(2), pred, gt)
        assert miou(cm) == 0.0

    def test_all_undefined_reports_none_not_nan(self):
        cm = ConfusionMatrix.zeros(3)
        assert miou(cm) is None
        assert all(v is None for v in iou_per_class(cm))

    def test_class_filter_restricts_mean(self):
        cm = ConfusionMatrix(counts=np.array([[1, 0], [1, 2]]))
        assert miou(cm, {0}) == 0.5
        assert miou(cm, {1}) == 2 / 3
        assert miou(cm, {0, 1}) == miou(cm)

    def test_class_filter_validation(self):
        cm = ConfusionMatrix.zeros(2)
        with pytest.raises(SegbenchError, match="class_filter"):
            miou(cm, {5})

    def test_filter_with_only_undefined_classes(self):
        cm = ConfusionMatrix(counts=np.array([[4, 0], [0, 0]]))
        assert miou(cm, {1}) is None

    def test_matches_set_oracle_exactly(self, rng):
        for _ in range(200):
            pred, gt, k = random_mask_pair(rng)
            cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
            oracle_per_class, oracle_mean = set_based_iou(pred.labels, gt.labels, k)
            assert iou_per_class(cm) == oracle_per_class
            assert miou(cm) == oracle_mean

    def test_permutation_invariance(self, rng):
        for _ in range(20):
            pred, gt, k = random_mask_pair(rng)
            if k < 2:
                continue
            perm = rng.permutation(k)
            lut = np.full(256, IGNORE_LABEL, dtype=np.uint8)
            lut[:k] = perm
            lut[IGNORE_LABEL] = IGNORE_LABEL
            pred_p = mask_of(lut[pred.labels], k)
            gt_p = mask_of(lut[gt.labels], k)
            cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
            cm_p = accumulate(ConfusionMatrix.zeros(k), pred_p, gt_p)
            ious = iou_per_class(cm)
            ious_p = iou_per_class(cm_p)
            for c in range(k):
                assert ious_p[int(perm[c])] == ious[c]
            a, b = miou(cm), miou(cm_p)
            if a is None:
                assert b is None
            else:
                assert b == pytest.approx(a, abs=1e-15)

    def test_miou_bounds_and_perfection(self, rng):
        for _ in range(50):
            pred, gt, k = random_mask_pair(rng)
            cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
            score = miou(cm)
            if score is None:
                continue
            assert 0.0 <= score <= 1.0
            off_diag = cm.counts - np.diag(np.diag(cm.counts))
            if score == 1.0:
                assert off_diag.sum() == 0


class TestMerge:
    def test_zero_identity(self, rng):
        pred, gt, k = random_mask_pair(rng)
        cm = accumulate(ConfusionMatrix.zeros(k), pred, gt)
        assert merge(cm, ConfusionMatrix.zeros(k)) == cm

    def test_commutative_and_associative(self, rng):
        mats = [
            ConfusionMatrix(counts=rng.integers(0, 50, size=(3, 3)))
            for _ in range(3)
        ]
        a, b, c = mats
        assert merge(a, b) == merge(b, a)
        assert merge(merge(a, b), c) == merge(a, merge(b, c))

    def test_k_mismatch(self):
        with pytest.raises(SegbenchError, match="K="):
            merge(ConfusionMatrix.zeros(2), ConfusionMatrix.zeros(3))

    def test_split_accumulation_equals_single_pass(self, rng):
        k = 4
        masks = []
        for _ in range(4):
            pool = list(range(k)) + [IGNORE_LABEL]
            pred = rng.choice(pool, size=(8, 8)).astype(np.uint8)
            gt = rng.choice(pool, size=(8, 8)).astype(np.uint8)
            masks.append((mask_of(pred, k), mask_of(gt, k)))
        single = ConfusionMatrix.zeros(k)
        for pred, gt in masks:
            single = accumulate(single, pred, gt)
        half_a = ConfusionMatrix.zeros(k)
        for pred, gt in masks[:2]:
            half_a = accumulate(half_a, pred, gt)
        half_b = ConfusionMatrix.zeros(k)
        for pred, gt in masks[2:]:
            half_b = accumulate(half_b, pred, gt)
        assert merge(half_a, half_b) == single


class TestSerialization:
    def test_matrix_round_trip(self):
        cm = ConfusionMatrix(counts=np.array([[1, 2], [3, 4]]))
        assert ConfusionMatrix.from_dict(cm.to_dict()) == cm

    def test_breakdown_serializes_none(self):
        cm = ConfusionMatrix(counts=np.array([[4, 0], [0, 0]]))
        payload = breakdown(cm).to_dict()
        assert payload["per_class"] == [1.0, None]
        assert payload["miou"] == 1.0
