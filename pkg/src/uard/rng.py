"""Seeded random streams.

Every stochastic component draws from its own ``numpy.random.Generator``
backed by Philox4x64 (a counter-based 64-bit bit generator). Streams are keyed
by ``(base_seed, run_index, label)`` through ``numpy.random.SeedSequence``, so
a run produces the same numbers whether it executes serially or in a worker
process, and no platform entropy is ever consulted.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["label_key", "make_stream", "run_seed"]


def label_key(label: str) -> int:
    """Stable 64-bit integer for a stream label (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_stream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return an independent Philox generator for ``seed`` and ``keys``.

    String keys are hashed with :func:`label_key`; integers are used as-is.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed)]
    for key in keys:
        entropy.append(label_key(key) if isinstance(key, str) else int(key))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def run_seed(base_seed: int, index: int) -> int:
    """Seed for the ``index``-th run of a suite (``base_seed + index``)."""
    return int(base_seed) + int(index)
