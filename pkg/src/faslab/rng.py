"""Seeded random streams.

Every experiment owns one integer seed; trials get child seeds derived from it
with :class:`numpy.random.SeedSequence`, and generators use the counter-based
Philox bit generator so streams are reproducible regardless of worker layout.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Return a Philox generator for an int seed, a SeedSequence, or pass through a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def trial_seed(seed: int, trial: int, stream: int = 0) -> int:
    """Deterministic 63-bit child seed for ``(experiment seed, trial, stream)``."""
    ss = np.random.SeedSequence([int(seed), int(trial), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
