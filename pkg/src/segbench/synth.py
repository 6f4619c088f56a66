"""Degradable synthetic predictors: seeded corruptions of ground truth.

The degradation law is linear: effective flip probability
p_eff = base_flip_prob + noise_sensitivity[family] * sigma, clamped to
[0, 0.5). corrupt_iid draws the per-pixel uniform field before the
replacement labels, so with a fixed seed the flip set at a lower p is a
subset of the flip set at any higher p (paired severities degrade
monotonically). Structured corruptions emulate over/under-segmentation
and dropped regions for the error analyzer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .exceptions import SegbenchError
from .masks import IGNORE_LABEL, LabelMask
from .noise import NOISE_FAMILIES, NoiseSpec
from .seeding import derive_seed, rng_for

STRUCTURES = ("iid", "dilate", "erode", "drop_component")

_EIGHT_CONN = np.ones((3, 3), dtype=bool)

# largest float64 strictly below 0.5
_P_EFF_MAX = float(np.nextafter(0.5, 0.0))


@dataclass(frozen=True)
class PredictorSpec:
    """A named synthetic predictor and its degradation parameters.

    noise_sensitivity maps family -> extra flip probability per unit sigma
    (missing families default to 0). magnitude / target_class configure the
    structured modes and are ignored for structure="iid".
    """

    name: str
    base_flip_prob: float = 0.0
    noise_sensitivity: dict | None = None
    structure: str = "iid"
    seed: int = 0
    magnitude: float = 1
    target_class: int = 1

    def __post_init__(self) -> None:
        if not self.name:
            raise SegbenchError("predictor name must be non-empty")
        if not 0.0 <= self.base_flip_prob < 1.0:
            raise SegbenchError("base_flip_prob must lie in [0, 1)")
        if self.structure not in STRUCTURES:
            raise SegbenchError(
                f"unknown structure {self.structure!r} (want one of {STRUCTURES})"
            )
        sens = self.noise_sensitivity
        if sens is None:
            sens = {}
        elif isinstance(sens, (int, float)):
            sens = {family: float(sens) for family in NOISE_FAMILIES}
        else:
            sens = {str(k): float(v) for k, v in sens.items()}
            unknown = set(sens) - set(NOISE_FAMILIES)
            if unknown:
                raise SegbenchError(f"unknown noise families in sensitivity: {sorted(unknown)}")
        if any(v < 0.0 for v in sens.values()):
            raise SegbenchError("noise sensitivities must be >= 0")
        object.__setattr__(self, "noise_sensitivity", sens)

    def effective_flip_prob(self, noise: NoiseSpec | None) -> float:
        p = self.base_flip_prob
        if noise is not None:
            p += self.noise_sensitivity.get(noise.family, 0.0) * noise.sigma
        return min(max(p, 0.0), _P_EFF_MAX)

    def with_seed(self, seed: int) -> "PredictorSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "base_flip_prob": self.base_flip_prob,
            "noise_sensitivity": dict(self.noise_sensitivity),
            "structure": self.structure,
            "seed": self.seed,
        }
        if self.structure != "iid":
            out["magnitude"] = self.magnitude
            out["target_class"] = self.target_class
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "PredictorSpec":
        return cls(
            name=payload["name"],
            base_flip_prob=payload.get("base_flip_prob", 0.0),
            noise_sensitivity=payload.get("noise_sensitivity"),
            structure=payload.get("structure", "iid"),
            seed=payload.get("seed", 0),
            magnitude=payload.get("magnitude", 1),
            target_class=payload.get("target_class", 1),
        )


def corrupt_iid(gt: LabelMask, p: float, seed: int) -> LabelMask:
    """Flip each non-ignore pixel with probability p to a uniformly random
    different valid label; ignore pixels pass through."""
    if not 0.0 <= p < 1.0:
        raise SegbenchError("flip probability must lie in [0, 1)")
    if p == 0.0:
        return gt
    if gt.num_classes < 2:
        raise SegbenchError("corrupt_iid needs num_classes >= 2 to pick a different label")
    rng = rng_for(seed)
    u = rng.random(gt.labels.shape)
    offsets = rng.integers(1, gt.num_classes, size=gt.labels.shape)
    flips = (u < p) & (gt.labels != IGNORE_LABEL)
    out = gt.labels.copy()
    out[flips] = (
        (gt.labels[flips].astype(np.int64) + offsets[flips]) % gt.num_classes
    ).astype(np.uint8)
    return LabelMask(labels=out, num_classes=gt.num_classes)


def _components(binary: np.ndarray) -> tuple[np.ndarray, int]:
    labeled, count = ndimage.label(binary, structure=_EIGHT_CONN)
    return labeled, count


def _fill_label(labels: np.ndarray, region: np.ndarray, target_class: int) -> int:
    """Most frequent label adjacent (8-conn) to region, excluding the target
    class and the ignore sentinel; ties go to the smallest id; 0 if none."""
    ring = ndimage.binary_dilation(region, structure=_EIGHT_CONN) & ~region
    candidates = labels[ring]
    candidates = candidates[(candidates != target_class) & (candidates != IGNORE_LABEL)]
    if candidates.size == 0:
        return 0
    counts = np.bincount(candidates)
    return int(counts.argmax())


def corrupt_structured(
    gt: LabelMask,
    mode: str,
    magnitude: float,
    target_class: int,
    seed: int,
) -> LabelMask:
    """Morphological corruption of one class: grow it, shrink it, or drop a
    fraction of its connected components.

    Dropped or eroded pixels take the most frequent adjacent non-target
    label (class 0 when the region has no labeled neighbors). Ignore pixels
    are never created or overwritten.
    """
    if mode not in ("dilate", "erode", "drop_component"):
        raise SegbenchError(f"unknown structured mode {mode!r}")
    if not 0 <= target_class < gt.num_classes:
        raise SegbenchError(f"target_class {target_class} must be < num_classes {gt.num_classes}")
    target = gt.labels == target_class
    out = gt.labels.copy()

    if mode in ("dilate", "erode"):
        radius = int(magnitude)
        if radius < 1 or radius != magnitude:
            raise SegbenchError("dilate/erode magnitude must be an integer radius >= 1")
        footprint = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
        if mode == "dilate":
            grown = ndimage.binary_dilation(target, structure=footprint)
            claim = grown & ~target & (gt.labels != IGNORE_LABEL)
            out[claim] = target_class
        else:
            shrunk = ndimage.binary_erosion(target, structure=footprint)
            removed = target & ~shrunk
            out[removed] = _fill_label(gt.labels, target, target_class)
        return LabelMask(labels=out, num_classes=gt.num_classes)

    fraction = float(magnitude)
    if not 0.0 < fraction <= 1.0:
        raise SegbenchError("drop_component magnitude must be a fraction in (0, 1]")
    labeled, count = _components(target)
    if count == 0:
        return gt
    n_drop = int(round(fraction * count))
    if n_drop == 0:
        return gt
    rng = rng_for(seed)
    dropped = rng.choice(count, size=n_drop, replace=False) + 1
    for comp_id in sorted(int(c) for c in dropped):
        region = labeled == comp_id
        out[region] = _fill_label(gt.labels, region, target_class)
    return LabelMask(labels=out, num_classes=gt.num_classes)


def predict(
    spec: PredictorSpec, gt: LabelMask, noise: NoiseSpec | None = None
) -> LabelMask:
    """Produce this predictor's mask for one ground truth.

    Structured modes apply their morphological signature first, then iid
    flips at p_eff on top. The iid draw is seeded independently of the
    noise family and level, so severities sharing a seed are paired.
    """
    out = gt
    if spec.structure != "iid":
        out = corrupt_structured(
            out,
            spec.structure,
            spec.magnitude,
            spec.target_class,
            derive_seed(spec.seed, "structure"),
        )
    p_eff = spec.effective_flip_prob(noise)
    if p_eff > 0.0:
        out = corrupt_iid(out, p_eff, derive_seed(spec.seed, "iid"))
    return out
