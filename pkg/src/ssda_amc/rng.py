"""Seeded random streams.

All randomness comes from numpy's Philox4x64-10 counter-based generator
(``numpy.random.Philox``). A stream is identified by the experiment seed plus
a purpose tag and optional integer keys; the tuple is hashed into the
generator key through ``numpy.random.SeedSequence`` so each stage (payload,
phase, shuffle, corruption, noise, ...) can be reproduced on its own.

Generator identifier recorded in provenance logs: ``RNG_NAME``.
"""

import zlib

import numpy as np

RNG_NAME = "philox4x64-10/seedsequence-v1"

_MASK64 = (1 << 64) - 1


def purpose_key(purpose):
    """Stable 32-bit integer for a purpose tag (CRC-32 of its UTF-8 bytes)."""
    return zlib.crc32(purpose.encode("utf-8"))


def derive(seed, purpose, *keys):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, purpose, *keys)``."""
    spawn_key = (purpose_key(purpose),) + tuple(int(k) & 0xFFFFFFFF for k in keys)
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, purpose, *keys):
    """Derive a 64-bit integer seed, for handing to code that wants an int."""
    spawn_key = (purpose_key(purpose),) + tuple(int(k) & 0xFFFFFFFF for k in keys)
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=spawn_key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
