"""Deterministic RNG derivation.

Every random stream in a run is derived from the experiment seed plus a
fixed integer key, so sync and async runs of the same seed share streams
where the protocols overlap (e.g. the shared sync policy uses the same
stream as edge 0's async policy).
"""

import numpy as np

DATA_STREAM = 0
MODEL_STREAM = 1
EDGE_STREAM = 2
POLICY_STREAM = 3


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a generator for the stream identified by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
