"""Named, reproducible random streams.

Every source of randomness in a run derives from one root seed plus a string
name ("data", "init", "dirichlet", "mix", "bank", ...).  Streams are
independent of creation order, so toggling a module on or off never shifts
the randomness any other module sees.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(root_seed: int, *names) -> np.random.SeedSequence:
    """Derive a SeedSequence from a root seed and a path of stream names."""
    digest = hashlib.sha256("/".join(str(n) for n in names).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, *words])


def stream(root_seed: int, *names) -> np.random.Generator:
    """A PCG64 generator for the named stream."""
    return np.random.default_rng(stream_seed(root_seed, *names))
