"""Deterministic seed derivation.

A single master seed drives every random component of an experiment. Sub-seeds
are derived by folding a label path (strings and integers) into a splitmix64
chain, so any component can be re-run in isolation given the master seed and
its label path, e.g. ``derive_seed(master, "rollout", band, iteration, m)``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def _splitmix_next(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK
    return _mix(state), state


def derive_seed(master: int, *path: int | float | str) -> int:
    """Derive a 64-bit sub-seed from a master seed and a label path."""
    state = int(master) & _MASK
    for part in path:
        if isinstance(part, str):
            tokens = part.encode("utf-8")
            chunks = [int.from_bytes(tokens[i:i + 8], "little")
                      for i in range(0, len(tokens), 8)] or [0]
        elif isinstance(part, float) and not part.is_integer():
            chunks = [int.from_bytes(np.float64(part).tobytes(), "little")]
        else:
            chunks = [int(part) & _MASK]
        for c in chunks:
            out, state = _splitmix_next(state ^ c)
            state ^= out
    out, _ = _splitmix_next(state)
    return out


def rng_for(master: int, *path: int | float | str) -> np.random.Generator:
    """Generator seeded from a derived sub-seed."""
    return np.random.default_rng(derive_seed(master, *path))
