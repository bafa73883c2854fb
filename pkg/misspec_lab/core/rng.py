"""
Seeded random streams.

Every stream is a ``numpy.random.Generator`` over the counter-based Philox
bit generator. The stream for ``(root_seed, index)`` is keyed directly by the
two 64-bit words ``[root_seed, index]``; a plain integer seed ``s`` is the
stream ``(s, 0)``. Any implementation that keys Philox-4x64 the same way
reproduces the same draws.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.Generator | None

_MASK64 = (1 << 64) - 1


def stream(root_seed: int, index: int = 0) -> np.random.Generator:
    """Return the stream for ``(root_seed, index)``."""
    if root_seed < 0 or index < 0:
        raise ValueError("seeds and stream indices must be non-negative")
    key = np.array([root_seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Coerce *seed* to a Generator. ``None`` means seed 0, never OS entropy."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(0 if seed is None else int(seed), 0)


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from *rng* for a derived, independent stream."""
    return int(rng.integers(0, 2**63 - 1))
