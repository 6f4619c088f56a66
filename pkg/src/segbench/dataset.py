"""Dataset manifests, the 80/20 split protocol, and paired augmentation.

A manifest is a JSON catalog binding entry ids to an image, a ground-truth
mask, and optionally named prediction-mask sets. Paths are interpreted
relative to the manifest file's directory. Prediction sets for noisy sweep
cells use keys of the form "name@family:level".
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import SegbenchError
from .masks import IGNORE_LABEL, ImageBuffer, LabelMask
from .seeding import rng_for


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: Path
    gt_mask: Path
    predictions: dict


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple

    def entry_ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def get(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise SegbenchError(f"no manifest entry with id {entry_id!r}")


def _parse_entry(raw: dict, index: int, base: Path) -> ManifestEntry:
    if not isinstance(raw, dict):
        raise SegbenchError(f"manifest entry #{index} must be an object")
    for key in ("id", "image", "gt_mask"):
        if key not in raw:
            raise SegbenchError(f"manifest entry #{index} is missing required key {key!r}")
    predictions = raw.get("predictions", {})
    if not isinstance(predictions, dict):
        raise SegbenchError(f"entry {raw['id']!r}: predictions must be an object")
    return ManifestEntry(
        id=str(raw["id"]),
        image=base / raw["image"],
        gt_mask=base / raw["gt_mask"],
        predictions={str(k): base / v for k, v in predictions.items()},
    )


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest JSON file.

    Validation rejects duplicate entry ids and (unless check_files=False)
    reports every dangling file reference with its entry id.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SegbenchError(f"manifest file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SegbenchError(f"manifest {path} is not valid JSON: {exc}")
    if not isinstance(payload, dict) or "entries" not in payload:
        raise SegbenchError(f"manifest {path} must be an object with an 'entries' list")
    base = path.parent
    entries = [
        _parse_entry(raw, i, base) for i, raw in enumerate(payload["entries"])
    ]
    seen: set[str] = set()
    for e in entries:
        if e.id in seen:
            raise SegbenchError(f"duplicate entry id {e.id!r} in manifest")
        seen.add(e.id)
    if check_files:
        dangling = []
        for e in entries:
            for label, p in [("image", e.image), ("gt_mask", e.gt_mask)] + [
                (f"prediction {name!r}", p) for name, p in e.predictions.items()
            ]:
                if not p.exists():
                    dangling.append(f"entry {e.id!r}: {label} missing at {p}")
        if dangling:
            raise SegbenchError("manifest has dangling paths:\n" + "\n".join(dangling))
    return DatasetManifest(name=str(payload.get("name", path.stem)), entries=tuple(entries))


def merge_prediction_fragment(
    manifest_payload: dict,
    fragment: dict,
    manifest_dir: str | Path,
    fragment_dir: str | Path,
) -> dict:
    """Fold an exported prediction fragment into a raw manifest payload.

    The fragment shape is {"predictor": name, "masks": {entry_id: path}};
    its paths are resolved against fragment_dir and rewritten relative to
    manifest_dir. Unknown entry ids are an error.
    """
    if "predictor" not in fragment or "masks" not in fragment:
        raise SegbenchError("fragment must carry 'predictor' and 'masks'")
    name = str(fragment["predictor"])
    by_id = {str(e["id"]): e for e in manifest_payload.get("entries", [])}
    unknown = [i for i in fragment["masks"] if i not in by_id]
    if unknown:
        raise SegbenchError(f"fragment references unknown entry ids: {sorted(unknown)}")
    manifest_dir = Path(manifest_dir)
    fragment_dir = Path(fragment_dir)
    for entry_id, mask_path in fragment["masks"].items():
        resolved = (fragment_dir / mask_path).resolve()
        rel = os.path.relpath(resolved, manifest_dir.resolve())
        by_id[entry_id].setdefault("predictions", {})[name] = rel
    return manifest_payload


@dataclass(frozen=True)
class SplitResult:
    """Disjoint train/test id partition from a seeded uniform shuffle."""

    train_ids: tuple
    test_ids: tuple
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }


def split(
    manifest: DatasetManifest, test_fraction: float = 0.2, seed: int = 0
) -> SplitResult:
    """Shuffle entry ids with the seed, take round(test_fraction * total)
    for testing, the rest for training."""
    if not 0.0 < test_fraction < 1.0:
        raise SegbenchError("test_fraction must lie strictly between 0 and 1")
    ids = manifest.entry_ids()
    if not ids:
        raise SegbenchError("cannot split an empty manifest")
    n_test = int(round(test_fraction * len(ids)))
    order = rng_for(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return SplitResult(
        train_ids=tuple(shuffled[n_test:]),
        test_ids=tuple(shuffled[:n_test]),
        seed=seed,
    )


def _nn_indices(n_old: int, n_new: int) -> np.ndarray:
    centers = (np.arange(n_new) + 0.5) * (n_old / n_new)
    return np.minimum(np.floor(centers).astype(np.intp), n_old - 1)


def flip_pair(img: ImageBuffer, mask: LabelMask) -> tuple[ImageBuffer, LabelMask]:
    """Horizontal flip (an involution) applied to both rasters."""
    return (
        ImageBuffer(samples=img.samples[:, ::-1, :]),
        LabelMask(labels=mask.labels[:, ::-1], num_classes=mask.num_classes),
    )


def rotate_pair(
    img: ImageBuffer, mask: LabelMask, angle: int
) -> tuple[ImageBuffer, LabelMask]:
    """Rotate both rasters counter-clockwise by 90, 180, or 270 degrees."""
    if angle not in (90, 180, 270):
        raise SegbenchError("rotation angle must be 90, 180, or 270")
    k = angle // 90
    return (
        ImageBuffer(samples=np.rot90(img.samples, k=k, axes=(0, 1))),
        LabelMask(labels=np.rot90(mask.labels, k=k), num_classes=mask.num_classes),
    )


def scale_pair(
    img: ImageBuffer, mask: LabelMask, factor: float
) -> tuple[ImageBuffer, LabelMask]:
    """Nearest-neighbor rescale of both rasters, then center-crop (factor
    above 1) or pad (below 1) back to the original size.

    Nearest-neighbor keeps image and mask pixel-aligned and never invents
    labels. Padding fills the image with 0.0 and the mask with the ignore
    sentinel, so padded border pixels drop out of scoring.
    """
    if factor <= 0:
        raise SegbenchError("scale factor must be positive")
    h, w = mask.labels.shape
    nh, nw = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
    ri, ci = _nn_indices(h, nh), _nn_indices(w, nw)
    img_scaled = img.samples[np.ix_(ri, ci)]
    mask_scaled = mask.labels[np.ix_(ri, ci)]

    if nh >= h and nw >= w:
        top, left = (nh - h) // 2, (nw - w) // 2
        img_out = img_scaled[top : top + h, left : left + w]
        mask_out = mask_scaled[top : top + h, left : left + w]
    else:
        img_out = np.zeros((h, w, img.channels), dtype=np.float64)
        mask_out = np.full((h, w), IGNORE_LABEL, dtype=np.uint8)
        top, left = (h - nh) // 2, (w - nw) // 2
        img_out[top : top + nh, left : left + nw] = img_scaled
        mask_out[top : top + nh, left : left + nw] = mask_scaled
    return (
        ImageBuffer(samples=img_out),
        LabelMask(labels=mask_out, num_classes=mask.num_classes),
    )


def augment(
    img: ImageBuffer,
    mask: LabelMask,
    prob: float = 0.2,
    seed: int = 0,
) -> tuple[ImageBuffer, LabelMask, dict | None]:
    """With the given probability, apply exactly one transform (flip,
    rotation by a multiple of 90 degrees, or scale by 0.8 / 1.2) identically
    to image and mask; otherwise pass both through unchanged.

    Returns (image, mask, descriptor); the descriptor records the applied
    transform, or is None.
    """
    if img.samples.shape[:2] != mask.labels.shape:
        raise SegbenchError("image and mask dimensions must match for augmentation")
    if not 0.0 <= prob <= 1.0:
        raise SegbenchError("augmentation probability must lie in [0, 1]")
    rng = rng_for(seed)
    if rng.random() >= prob:
        return img, mask, None
    kind = ("flip", "rotate", "scale")[rng.integers(0, 3)]
    if kind == "flip":
        out_img, out_mask = flip_pair(img, mask)
        return out_img, out_mask, {"kind": "flip", "axis": "horizontal"}
    if kind == "rotate":
        angle = int((90, 180, 270)[rng.integers(0, 3)])
        out_img, out_mask = rotate_pair(img, mask, angle)
        return out_img, out_mask, {"kind": "rotate", "angle": angle}
    factor = float((0.8, 1.2)[rng.integers(0, 2)])
    out_img, out_mask = scale_pair(img, mask, factor)
    return out_img, out_mask, {"kind": "scale", "factor": factor}
