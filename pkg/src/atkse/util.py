"""Small shared helpers: seeded substreams and TSV number formatting."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, tag: str) -> np.random.Generator:
    """Derive an independent, reproducible RNG stream from (seed, tag).

    The tag is hashed with crc32 so the mapping is stable across processes
    and Python versions (the builtin ``hash`` is salted and is not).
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed), zlib.crc32(tag.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def format_real(x: float) -> str:
    """Format a real for TSV output: '.'-decimal, 9 significant digits."""
    return format(float(x), ".9g")


def chunked(items, size):
    """Yield consecutive slices of at most ``size`` items."""
    for start in range(0, len(items), size):
        yield items[start:start + size]
