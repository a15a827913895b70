"""Deterministic RNG derivation.

Every randomized routine takes an explicit master seed and derives child
generators through SeedSequence spawn keys. Child streams depend only on
(master_seed, path), never on scheduling, so parallel runs with any worker
count reproduce the single-threaded result bit for bit.
"""

from __future__ import annotations

import numpy as np


def rng_from(master_seed: int, *path: int) -> np.random.Generator:
    """Return the child generator addressed by ``path`` under ``master_seed``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse a child stream to a plain integer seed (for nested APIs)."""
    return int(rng_from(master_seed, *path).integers(0, 2**63 - 1))
