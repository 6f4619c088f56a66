from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from segbench import ImageBuffer, LabelMask, save_mask
from segbench.masks import save_image


def mask_of(rows, num_classes=None) -> LabelMask:
    arr = np.asarray(rows, dtype=np.uint8)
    if num_classes is None:
        from segbench.masks import infer_num_classes

        num_classes = infer_num_classes(arr)
    return LabelMask(labels=arr, num_classes=num_classes)


def gray_image(height: int, width: int, value: float = 0.5, channels: int = 1) -> ImageBuffer:
    return ImageBuffer(samples=np.full((height, width, channels), value, dtype=np.float64))


def write_mask_png(path: Path, rows, num_classes=None) -> Path:
    save_mask(mask_of(rows, num_classes), path)
    return path


def write_gray_png(path: Path, height: int, width: int, value: float = 0.5) -> Path:
    save_image(gray_image(height, width, value), path)
    return path


def write_manifest(path: Path, entries: list[dict], name: str = "fixture") -> Path:
    path.write_text(json.dumps({"name": name, "entries": entries}, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20260809))
