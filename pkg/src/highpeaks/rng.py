"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox4x64 generator
whose key is derived from ``(master_seed, *path)`` through
``numpy.random.SeedSequence``.  Two different paths give two different keys,
and Philox streams with different keys do not overlap, so replicate ``i`` of
cell ``c`` always sees the same numbers regardless of scheduling order.
"""

import numpy as np

__all__ = ["stream", "derive_seed"]

_MASK64 = (1 << 64) - 1


def _check_seed(seed):
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for ``(seed, *path)``.

    Parameters
    ----------
    seed : int
        Master seed (non-negative).
    *path : int
        Stream coordinates, e.g. ``(cell_index, replicate_index)``.
    """
    seed = _check_seed(seed)
    key = tuple(_check_seed(p) for p in path)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *path):
    """Deterministic 64-bit child seed for ``(seed, *path)``."""
    seed = _check_seed(seed)
    key = tuple(_check_seed(p) for p in path)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & _MASK64
