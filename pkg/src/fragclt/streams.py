"""Derived random streams.

Every stochastic quantity is drawn from a generator keyed by
``(seed, *key)``, so results do not depend on how work is split
between processes.
"""

from __future__ import annotations

import numpy as np


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(seed, key)``.

    Examples
    --------
    >>> a = derived_rng(7, 3).random()
    >>> b = derived_rng(7, 3).random()
    >>> a == b
    True
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def seed_from(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer seed from ``rng``."""
    return int(rng.integers(0, 2**63 - 1))
