"""Named random streams.

Every stochastic step in a study pulls its own generator derived from the
study seed, a purpose label, and optional integer keys (replicate index,
chain index).  Streams are mutually independent by construction, so adding
or removing one consumer (say, dropping a model from the run) never shifts
the draws seen by any other consumer.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    if isinstance(part, str):
        # crc32 is stable across platforms and python versions
        return zlib.crc32(part.encode("utf8"))
    raise TypeError(f"stream key must be int or str, got {type(part)!r}")


def stream(seed: int, *key) -> np.random.Generator:
    """Return a Generator for the given (seed, purpose, indices...) key."""
    spawn = tuple(_key_int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn))
