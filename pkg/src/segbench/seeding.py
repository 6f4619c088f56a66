"""Deterministic seed derivation.

All randomness in the toolkit flows through numpy's PCG64 bit generator
(seeded, platform-independent, published reference stream). Sub-seeds for
independent work items are derived by hashing the parent seed together with
string/integer labels, so results never depend on evaluation order or on how
work is partitioned across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: int | str) -> int:
    """Derive a 64-bit seed from a sequence of labels via SHA-256."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(seed: int) -> np.random.Generator:
    """A fresh PCG64 generator for the given seed."""
    return np.random.Generator(np.random.PCG64(seed))
