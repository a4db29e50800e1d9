"""Named random streams derived from one run seed.

Each purpose (data, init, dropout, folds, ...) gets its own generator, so
switching one feature on or off never shifts the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *map(int, extra)])
