"""Quantitative failure taxonomy for one class of a prediction.

Verdicts:
  - ideal: recall and precision both >= 1 - eps (excludes all others)
  - over_segmentation: more predicted components than ground truth while
    coverage stays high (the region got fragmented)
  - under_segmentation: recall below the low threshold (part of the region
    was missed)
  - region_exclusion: at least one whole ground-truth component has zero
    predicted overlap (e.g. a missed corner)

Connected components use 8-connectivity; component labels follow row-major
first-pixel order. Thresholds are configurable; the defaults quantify the
qualitative categories and are a toolkit definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import SegbenchError
from .masks import IGNORE_LABEL, LabelMask

_EIGHT_CONN = np.ones((3, 3), dtype=bool)

VERDICTS = ("over_segmentation", "under_segmentation", "region_exclusion", "ideal")


@dataclass(frozen=True)
class ErrorThresholds:
    recall_hi: float = 0.85
    recall_lo: float = 0.8
    ideal_eps: float = 0.02

    def __post_init__(self) -> None:
        for name in ("recall_hi", "recall_lo", "ideal_eps"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SegbenchError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ClassComponents:
    """Connected components of one class: count plus a labeled raster
    (0 = other classes, 1..count in row-major first-pixel order)."""

    count: int
    labels: np.ndarray

    def pixel_sets(self) -> list[set[int]]:
        """Flat pixel indices of each component, in label order."""
        flat = self.labels.ravel()
        return [set(np.nonzero(flat == i + 1)[0].tolist()) for i in range(self.count)]


def connected_components(mask: LabelMask, class_id: int) -> ClassComponents:
    """8-connected components of the given class."""
    if not 0 <= class_id < mask.num_classes:
        raise SegbenchError(f"class_id {class_id} must be < num_classes {mask.num_classes}")
    binary = mask.labels == class_id
    labeled, count = ndimage.label(binary, structure=_EIGHT_CONN)
    if count > 1:
        # renumber so label order is the raster order of first appearance
        flat = labeled.ravel()
        first_seen = np.full(count + 1, flat.size, dtype=np.int64)
        nz = np.nonzero(flat)[0]
        np.minimum.at(first_seen, flat[nz], nz)
        order = np.argsort(first_seen[1:], kind="stable")
        remap = np.zeros(count + 1, dtype=labeled.dtype)
        remap[order + 1] = np.arange(1, count + 1)
        labeled = remap[labeled]
    labeled.flags.writeable = False
    return ClassComponents(count=count, labels=labeled)


@dataclass(frozen=True)
class ErrorReport:
    entry_id: str
    class_id: int
    gt_components: int
    pred_components: int
    recall: float
    precision: float
    missed_component_count: int
    verdicts: tuple

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "class_id": self.class_id,
            "gt_components": self.gt_components,
            "pred_components": self.pred_components,
            "recall": self.recall,
            "precision": self.precision,
            "missed_component_count": self.missed_component_count,
            "verdicts": list(self.verdicts),
        }


def classify_errors(
    pred: LabelMask,
    gt: LabelMask,
    class_id: int,
    thresholds: ErrorThresholds | None = None,
    entry_id: str = "",
) -> ErrorReport:
    """Classify one prediction's failure modes for one class.

    Pixels whose ground truth is the ignore sentinel are excluded from all
    counts. Recall defaults to 1 when the class is absent from the ground
    truth, precision to 1 when it is absent from the prediction.
    """
    if pred.labels.shape != gt.labels.shape:
        raise SegbenchError("pred and gt dimensions must match")
    t = thresholds or ErrorThresholds()

    scored = gt.labels != IGNORE_LABEL
    gt_bin = (gt.labels == class_id) & scored
    pred_bin = (pred.labels == class_id) & scored

    inter = int((gt_bin & pred_bin).sum())
    n_gt = int(gt_bin.sum())
    n_pred = int(pred_bin.sum())
    recall = inter / n_gt if n_gt else 1.0
    precision = inter / n_pred if n_pred else 1.0

    gt_comps = connected_components(gt, class_id)
    pred_comps = connected_components(pred, class_id)
    missed = 0
    if gt_comps.count:
        overlap_ids = np.unique(gt_comps.labels[pred_bin])
        missed = gt_comps.count - int((overlap_ids > 0).sum())

    verdicts: list[str] = []
    if recall >= 1.0 - t.ideal_eps and precision >= 1.0 - t.ideal_eps:
        verdicts = ["ideal"]
    else:
        if pred_comps.count > gt_comps.count and recall >= t.recall_hi:
            verdicts.append("over_segmentation")
        if recall < t.recall_lo:
            verdicts.append("under_segmentation")
        if missed >= 1:
            verdicts.append("region_exclusion")

    return ErrorReport(
        entry_id=entry_id,
        class_id=class_id,
        gt_components=gt_comps.count,
        pred_components=pred_comps.count,
        recall=recall,
        precision=precision,
        missed_component_count=missed,
        verdicts=tuple(verdicts),
    )
