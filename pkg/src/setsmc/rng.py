"""Deterministic derivation of independent RNG streams.

Every random draw in a run comes from a generator keyed by
``(seed, component, temperature index, sweep)`` through ``SeedSequence``,
so any stage can be replayed in isolation and the same seed reproduces a
run bit for bit regardless of how repeats are scheduled.
"""

from __future__ import annotations

import numpy as np

__all__ = ["INIT", "RESAMPLE", "MUTATE", "ORACLE", "stream"]

# component ids for the stream key
INIT = 0
RESAMPLE = 1
MUTATE = 2
ORACLE = 3


def stream(
    seed: int, component: int, temp_index: int = 0, sweep: int = 0
) -> np.random.Generator:
    """Generator for one (seed, component, temperature, sweep) cell."""
    key = np.random.SeedSequence([int(seed), int(component), int(temp_index), int(sweep)])
    return np.random.default_rng(key)
