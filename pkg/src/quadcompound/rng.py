"""Seeded random streams split by a fixed label.

Each consumer asks for ``stream(seed, "label")``; streams for different
labels are independent, and adding a new label never changes an old one.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]


def stream(seed: int, label: str) -> np.random.Generator:
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
