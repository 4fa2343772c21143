"""Seed management: one top-level seed, labelled child streams."""

import zlib

import numpy as np


def split_rng(seed: int, *labels) -> np.random.Generator:
    """Derive an independent generator from a top-level seed and a label path.

    The same (seed, labels) pair always yields the same stream; different
    labels yield statistically independent streams.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    keys = [zlib.crc32(str(lab).encode("utf8")) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))
