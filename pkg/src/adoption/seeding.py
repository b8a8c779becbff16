"""Named random sub-streams derived from the single run seed."""

from __future__ import annotations

import zlib

import numpy as np

INIT = "init"
FOLDS = "folds"
NEGATIVES = "negatives"
RANDOM_BASELINE = "random-baseline"
SYNTHETIC = "synthetic"


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for sub-stream ``name``; ``extra`` spawns indexed children."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, key, *extra]))
