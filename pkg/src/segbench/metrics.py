"""Confusion-matrix accumulation and per-class IoU / mIOU.

For class c: TP = counts[c][c], FP = column sum - TP, FN = row sum - TP,
IoU_c = TP / (TP + FP + FN). mIOU is the arithmetic mean over classes whose
union is nonzero; union-zero classes are reported as undefined (None) and
excluded from the mean. Pixels where either mask carries the ignore
sentinel contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SegbenchError
from .masks import IGNORE_LABEL, LabelMask


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K pixel-count accumulator; counts[g][p] = pixels with ground
    truth g predicted as p. Counts are 64-bit integers."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise SegbenchError("confusion matrix must be square")
        if (arr < 0).any():
            raise SegbenchError("confusion matrix entries must be >= 0")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(counts=np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        """Total non-ignored pixels accumulated."""
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def to_dict(self) -> dict:
        return {"num_classes": self.num_classes, "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "ConfusionMatrix":
        counts = np.asarray(payload["counts"], dtype=np.int64)
        if counts.shape != (payload["num_classes"], payload["num_classes"]):
            raise SegbenchError("confusion matrix payload shape mismatch")
        return cls(counts=counts)


@dataclass(frozen=True)
class IouBreakdown:
    """Per-class IoUs (None where the union is zero) plus their mean."""

    per_class: tuple
    miou: float | None

    def to_dict(self) -> dict:
        return {"per_class": list(self.per_class), "miou": self.miou}


def accumulate(matrix: ConfusionMatrix, pred: LabelMask, gt: LabelMask) -> ConfusionMatrix:
    """Return matrix plus the pixel counts of one (pred, gt) pair.

    A pixel contributes only when both gt and pred are non-ignore.
    """
    if pred.labels.shape != gt.labels.shape:
        raise SegbenchError(
            f"dimension mismatch: pred {pred.labels.shape} vs gt {gt.labels.shape}"
        )
    k = matrix.num_classes
    p = pred.labels.ravel().astype(np.int64)
    g = gt.labels.ravel().astype(np.int64)
    keep = (g != IGNORE_LABEL) & (p != IGNORE_LABEL)
    p = p[keep]
    g = g[keep]
    if p.size and (int(p.max()) >= k or int(g.max()) >= k):
        raise SegbenchError(f"mask contains class id >= num_classes {k}")
    binned = np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts=matrix.counts + binned)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Element-wise sum; enables order-independent parallel accumulation."""
    if a.num_classes != b.num_classes:
        raise SegbenchError(
            f"cannot merge matrices with K={a.num_classes} and K={b.num_classes}"
        )
    return ConfusionMatrix(counts=a.counts + b.counts)


def iou_per_class(matrix: ConfusionMatrix) -> list[float | None]:
    """IoU for every class; None where TP + FP + FN = 0."""
    counts = matrix.counts
    tp = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    out: list[float | None] = []
    for c in range(matrix.num_classes):
        u = int(union[c])
        out.append(None if u == 0 else int(tp[c]) / u)
    return out


def miou(
    matrix: ConfusionMatrix, class_filter: set[int] | None = None
) -> float | None:
    """Mean of the defined per-class IoUs, optionally over a class subset.

    Returns None when no defined class survives the filter (never NaN).
    """
    per_class = iou_per_class(matrix)
    if class_filter is not None:
        bad = [c for c in class_filter if not 0 <= c < matrix.num_classes]
        if bad:
            raise SegbenchError(f"class_filter contains invalid class ids {bad}")
        per_class = [per_class[c] for c in sorted(class_filter)]
    defined = [v for v in per_class if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


def breakdown(
    matrix: ConfusionMatrix, class_filter: set[int] | None = None
) -> IouBreakdown:
    return IouBreakdown(
        per_class=tuple(iou_per_class(matrix)),
        miou=miou(matrix, class_filter),
    )
