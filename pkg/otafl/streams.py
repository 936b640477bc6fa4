"""Named random sub-streams derived from one master seed."""

import numpy as np

# Fixed spawn keys: adding a stream must never shift the existing ones.
STREAM_KEYS = {
    "geometry": 0,
    "fading": 1,
    "noise": 2,
    "data": 3,
    "batch": 4,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Returns the generator for one purpose under a master seed.

    The same (seed, name) pair always yields the same sequence, independent of
    which other streams were requested, so methods compared under one seed see
    the same geometry, fading and data.
    """
    if name not in STREAM_KEYS:
        raise KeyError(f"Unknown random stream '{name}'")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_KEYS[name],))
    return np.random.default_rng(sequence)
