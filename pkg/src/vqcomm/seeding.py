"""Root-seed splitting into named, order-independent streams.

Each stream is ``default_rng(SeedSequence(entropy=root, spawn_key=(id, *extra)))``
with a fixed per-name id, so adding a new experiment or reordering calls
never perturbs another stream.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "data": 0,
    "init": 1,
    "training": 2,
    "evaluation": 3,
    "codebook": 4,
    "gumbel": 5,
}


def stream_rng(root_seed: int, stream: str, *extra: int) -> np.random.Generator:
    if stream not in STREAM_IDS:
        raise KeyError(f"unknown seed stream {stream!r}; known: {sorted(STREAM_IDS)}")
    key = (STREAM_IDS[stream], *extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=root_seed, spawn_key=key))
