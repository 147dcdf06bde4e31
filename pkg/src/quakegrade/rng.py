"""Deterministic random-stream management.

Every stochastic operation in the package draws from its own child stream,
derived from a single master seed plus a named path. The generator is
numpy's PCG64, seeded through ``SeedSequence([seed, tag(part), ...])``
where string parts are tagged by the first 8 bytes of their SHA-256 digest.

This makes results reproducible bit-for-bit: the same seed and the same
inputs always produce the same outputs, independent of call order in the
surrounding program and of any other stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

# 64-bit unsigned master seed
MAX_SEED = 2**64 - 1


def _tag(part) -> int:
    if isinstance(part, (bool,)):
        raise TypeError("bool is not a valid stream path component")
    if isinstance(part, (int, np.integer)):
        value = int(part)
        if value < 0:
            raise ValueError(f"stream path integers must be >= 0, got {value}")
        return value
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "little")
    raise TypeError(f"stream path components must be str or int, got {type(part).__name__}")


def check_seed(seed: int) -> int:
    """Validate and normalize a master seed to the 64-bit unsigned range."""
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be in [0, 2^64), got {seed}")
    return seed


def child_rng(seed: int, *path) -> np.random.Generator:
    """Return the child generator for ``(seed, path...)``.

    The same (seed, path) always yields an identical generator. Distinct
    paths yield statistically independent streams.
    """
    seed = check_seed(seed)
    entropy = [seed] + [_tag(p) for p in path]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
