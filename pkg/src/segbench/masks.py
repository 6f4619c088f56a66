"""Core raster types and file I/O for label masks and images.

Masks are 8-bit single-channel PNGs whose pixel value is the class id;
255 is the ignore sentinel and is excluded from all voting and scoring.
Images are normalized to floating point in [0, 1] so that noise standard
deviations (0.01 / 0.05 / 0.1) are meaningful on one scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import SegbenchError

IGNORE_LABEL = 255

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class-id raster.

    Args:
        labels: (height, width) uint8 array; values are class ids in
            [0, num_classes) or the ignore sentinel 255.
        num_classes: K, the count of valid classes (ids 0..K-1).
    """

    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise SegbenchError("mask labels must be a 2D (height, width) array")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise SegbenchError("mask width and height must both be positive")
        if not (1 <= self.num_classes <= 255):
            raise SegbenchError("num_classes must be in [1, 255]")
        valid = (arr < self.num_classes) | (arr == IGNORE_LABEL)
        if not valid.all():
            bad = int(arr[~valid].max())
            raise SegbenchError(
                f"mask contains label {bad} >= num_classes {self.num_classes}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(
            self.labels, other.labels
        )

    def valid_label_set(self) -> set[int]:
        """Distinct non-ignore labels present in the mask."""
        values = np.unique(self.labels)
        return {int(v) for v in values if v != IGNORE_LABEL}


@dataclass(frozen=True)
class ImageBuffer:
    """Normalized floating-point raster, shape (height, width, channels).

    Every sample is finite and lies in [0, 1]; channels is 1 or 3.
    """

    samples: np.ndarray
    channels: int = field(init=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise SegbenchError("image must have shape (h, w) or (h, w, 1|3)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise SegbenchError("image width and height must both be positive")
        if not np.isfinite(arr).all():
            raise SegbenchError("image samples must all be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise SegbenchError("image samples must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "channels", arr.shape[2])

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


def infer_num_classes(labels: np.ndarray) -> int:
    """K = (max non-ignore label) + 1; 1 for an all-ignore mask."""
    arr = np.asarray(labels)
    non_ignore = arr[arr != IGNORE_LABEL]
    if non_ignore.size == 0:
        return 1
    return int(non_ignore.max()) + 1


def _png_depth_and_colortype(path: Path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        header = fh.read(26)
    if len(header) < 26 or not header.startswith(_PNG_MAGIC):
        raise SegbenchError(f"{path}: not a PNG file")
    return header[24], header[25]


def load_mask(path: str | Path, num_classes: int | None = None) -> LabelMask:
    """Load an 8-bit single-channel PNG as a LabelMask.

    num_classes defaults to (max non-ignore label) + 1. Multi-channel,
    palette, or >8-bit images are rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except FileNotFoundError:
        raise SegbenchError(f"mask file not found: {path}")
    except (UnidentifiedImageError, OSError) as exc:
        raise SegbenchError(f"unreadable mask file {path}: {exc}")
    if mode in ("I", "I;16", "I;16B", "I;16L"):
        raise SegbenchError(f"{path}: mask must be 8-bit, got 16-bit image")
    if mode == "P":
        raise SegbenchError(f"{path}: palette masks are unsupported; mask must be single-channel")
    if mode != "L":
        raise SegbenchError(f"{path}: mask must be single-channel (got mode {mode})")
    if arr.size == 0:
        raise SegbenchError(f"{path}: zero-size mask image")
    if num_classes is None:
        num_classes = infer_num_classes(arr)
    return LabelMask(labels=arr, num_classes=num_classes)


def save_mask(mask: LabelMask, path: str | Path) -> None:
    """Write a mask as an 8-bit single-channel PNG (lossless round trip)."""
    path = Path(path)
    try:
        Image.fromarray(np.asarray(mask.labels, dtype=np.uint8), mode="L").save(
            path, format="PNG"
        )
    except (OSError, PermissionError) as exc:
        raise SegbenchError(f"cannot write mask to {path}: {exc}")


def _read_ppm(path: Path) -> np.ndarray:
    """Parse binary PPM/PGM (P6/P5), 8- or 16-bit, into a uint array.

    16-bit samples are big-endian per the netpbm format definition.
    """
    data = path.read_bytes()

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise SegbenchError(f"{path}: truncated PPM header")
        return data[start:pos]

    magic = next_token()
    if magic not in (b"P5", b"P6"):
        raise SegbenchError(f"{path}: unsupported PPM magic {magic!r} (want P5 or P6)")
    channels = 1 if magic == b"P5" else 3
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError:
        raise SegbenchError(f"{path}: malformed PPM header")
    if width < 1 or height < 1:
        raise SegbenchError(f"{path}: zero-size PPM image")
    if maxval not in (255, 65535):
        raise SegbenchError(f"{path}: unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = width * height * channels
    if len(data) - pos < count * dtype.itemsize:
        raise SegbenchError(f"{path}: truncated PPM raster")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raster.reshape(height, width, channels).astype(np.uint16 if maxval == 65535 else np.uint8)


def load_image(path: str | Path) -> ImageBuffer:
    """Load an 8/16-bit PNG or binary PPM (P5/P6) normalized to [0, 1].

    Samples are divided by the format's max value (255 or 65535).
    """
    path = Path(path)
    if not path.exists():
        raise SegbenchError(f"image file not found: {path}")
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm"):
        raster = _read_ppm(path)
        maxval = 65535.0 if raster.dtype == np.uint16 else 255.0
        return ImageBuffer(samples=raster.astype(np.float64) / maxval)
    depth, colortype = _png_depth_and_colortype(path)
    if depth == 16 and colortype == 2:
        raise SegbenchError(f"{path}: 16-bit RGB PNG is unsupported")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise SegbenchError(f"corrupt or unsupported image {path}: {exc}")
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        maxval = 65535.0
    elif mode in ("L", "RGB"):
        maxval = 255.0
    else:
        raise SegbenchError(f"{path}: unsupported image mode {mode} (need 1 or 3 channels)")
    samples = arr.astype(np.float64) / maxval
    return ImageBuffer(samples=samples)


def save_image(img: ImageBuffer, path: str | Path) -> None:
    """Write an image as an 8-bit PNG (samples quantized by round(s*255))."""
    path = Path(path)
    arr = np.round(img.samples * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    try:
        pil.save(path, format="PNG")
    except (OSError, PermissionError) as exc:
        raise SegbenchError(f"cannot write image to {path}: {exc}")
