"""Seeded image perturbations: gaussian, salt-and-pepper, speckle.

Severity follows the low/medium/high ladder of standard deviations
0.01 / 0.05 / 0.1. For salt-and-pepper the same scalar is reused as the
corrupted-pixel fraction (a density, not a true standard deviation) so one
knob stays comparable across families; this mapping is a toolkit convention
and is documented in the README. All draws come from a seeded PCG64
generator, so identical (image, spec) pairs give bit-identical output on
every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SegbenchError
from .masks import ImageBuffer
from .seeding import rng_for

NOISE_FAMILIES = ("gaussian", "salt_pepper", "speckle")
NOISE_LEVELS = ("low", "medium", "high")

_LEVEL_SIGMA = {"low": 0.01, "medium": 0.05, "high": 0.1}


def resolve_level(level: str) -> float:
    """low -> 0.01, medium -> 0.05, high -> 0.1."""
    try:
        return _LEVEL_SIGMA[level]
    except KeyError:
        raise SegbenchError(f"unknown noise level {level!r} (want one of {NOISE_LEVELS})")


@dataclass(frozen=True)
class NoiseSpec:
    """One perturbation: family, resolved sigma, and the seed that fully
    determines it. level is None when sigma was given directly."""

    family: str
    sigma: float
    seed: int
    level: str | None = None

    def __post_init__(self) -> None:
        if self.family not in NOISE_FAMILIES:
            raise SegbenchError(
                f"unknown noise family {self.family!r} (want one of {NOISE_FAMILIES})"
            )
        if self.level is not None and resolve_level(self.level) != self.sigma:
            raise SegbenchError(
                f"sigma {self.sigma} does not match level {self.level!r}"
            )
        if not np.isfinite(self.sigma) or self.sigma < 0.0:
            raise SegbenchError("sigma must be finite and >= 0")

    @classmethod
    def from_level(cls, family: str, level: str, seed: int) -> "NoiseSpec":
        return cls(family=family, sigma=resolve_level(level), seed=seed, level=level)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "sigma": self.sigma,
            "seed": self.seed,
            "level": self.level,
        }


def gaussian_noise(img: ImageBuffer, spec: NoiseSpec) -> ImageBuffer:
    """Additive zero-mean normal noise, clamped back into [0, 1]."""
    if spec.family != "gaussian":
        raise SegbenchError(f"gaussian_noise called with family {spec.family!r}")
    if spec.sigma == 0.0:
        return img
    rng = rng_for(spec.seed)
    noisy = img.samples + rng.normal(0.0, spec.sigma, size=img.samples.shape)
    return ImageBuffer(samples=np.clip(noisy, 0.0, 1.0))


def salt_pepper_noise(img: ImageBuffer, spec: NoiseSpec) -> ImageBuffer:
    """Impulse noise: round(sigma * npixels) locations, without replacement,
    set to 1.0 (salt, p=1/2) or 0.0 (pepper) across all channels."""
    if spec.family != "salt_pepper":
        raise SegbenchError(f"salt_pepper_noise called with family {spec.family!r}")
    amount = spec.sigma
    if amount > 1.0:
        raise SegbenchError("salt-and-pepper amount must be <= 1.0")
    n_pixels = img.height * img.width
    n_corrupt = int(round(amount * n_pixels))
    if n_corrupt == 0:
        return img
    rng = rng_for(spec.seed)
    flat_idx = rng.choice(n_pixels, size=n_corrupt, replace=False)
    salt = rng.random(n_corrupt) < 0.5
    out = img.samples.copy()
    rows, cols = np.unravel_index(flat_idx, (img.height, img.width))
    out[rows, cols, :] = np.where(salt, 1.0, 0.0)[:, np.newaxis]
    return ImageBuffer(samples=out)


def speckle_noise(img: ImageBuffer, spec: NoiseSpec) -> ImageBuffer:
    """Multiplicative noise s * (1 + n), n ~ N(0, sigma), clamped to [0, 1]."""
    if spec.family != "speckle":
        raise SegbenchError(f"speckle_noise called with family {spec.family!r}")
    if spec.sigma == 0.0:
        return img
    rng = rng_for(spec.seed)
    noisy = img.samples * (1.0 + rng.normal(0.0, spec.sigma, size=img.samples.shape))
    return ImageBuffer(samples=np.clip(noisy, 0.0, 1.0))


_APPLIERS = {
    "gaussian": gaussian_noise,
    "salt_pepper": salt_pepper_noise,
    "speckle": speckle_noise,
}


def apply_noise(img: ImageBuffer, spec: NoiseSpec) -> ImageBuffer:
    """Dispatch to the family's injector."""
    return _APPLIERS[spec.family](img, spec)
