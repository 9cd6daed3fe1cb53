"""Counter-based random streams keyed by (seed, purpose, ids...).

Every random decision in a run draws from a stream whose key is a pure
function of the run seed, a purpose tag and a small tuple of integers
(step, person id, location id, ...). Nothing depends on the order in which
streams are created, so results do not change with the number of worker
processes or with the order locations are enumerated.

The generator is SplitMix64: the key is the initial state, the n-th output is
``mix(key + (n + 1) * GOLDEN)``. A scalar (pure Python) and a vectorised
(numpy ``uint64``) path produce identical bits.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

# Purpose tags. Values are arbitrary but frozen: changing one changes every run.
INIT = 0x1A11
CONTACT = 0x2C0C
TRANSMIT = 0x3E7A
MERGE = 0x4D6E
PROGRESS = 0x5F06
BEHAVIOR = 0x6B3A
MEMBERSHIP = 0x7EAB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, purpose: int, *ids: int) -> int:
    """Fold ``seed``, ``purpose`` and ``ids`` into a 64-bit stream key.

    Negative ids (e.g. step -1 for initialisation) are taken modulo 2**64.
    """
    h = mix64((seed & MASK64) ^ mix64(purpose))
    for i in ids:
        h = mix64(h + GOLDEN + (i & MASK64))
    return h


def name_tag(name: str) -> int:
    """Stable 64-bit tag for a string (used to key streams by model name)."""
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def uniform_at(key: int, counter: int) -> float:
    """The ``counter``-th uniform of stream ``key``, strictly inside (0, 1)."""
    x = mix64(key + (counter + 1) * GOLDEN)
    return ((x >> 11) + 0.5) * _INV53


class Stream:
    """Sequential view of a keyed stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key
        self.counter = counter

    @classmethod
    def keyed(cls, seed: int, purpose: int, *ids: int) -> "Stream":
        return cls(derive_key(seed, purpose, *ids))

    def uniform(self) -> float:
        u = uniform_at(self.key, self.counter)
        self.counter += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        out = uniforms_at(np.uint64(self.key), np.arange(self.counter, self.counter + n, dtype=np.uint64))
        self.counter += n
        return out

    def exponential(self) -> float:
        return -math.log(self.uniform())

    def __repr__(self) -> str:
        return f"Stream(key={self.key:#018x}, counter={self.counter})"


# -- vectorised path ---------------------------------------------------------

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_NM1 = np.uint64(_M1)
_NM2 = np.uint64(_M2)
_NGOLDEN = np.uint64(GOLDEN)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U30)) * _NM1
        z = (z ^ (z >> _U27)) * _NM2
    return z ^ (z >> _U31)


def derive_keys(seed: int, purpose: int, *ids) -> np.ndarray:
    """Vectorised :func:`derive_key`; each id may be a scalar or an int64 array."""
    h = np.uint64(mix64((seed & MASK64) ^ mix64(purpose)))
    with np.errstate(over="ignore"):
        for i in ids:
            arr = np.asarray(i, dtype=np.int64).astype(np.uint64)
            h = mix64_array(h + _NGOLDEN + arr)
    return np.asarray(h, dtype=np.uint64)


def uniforms_at(keys, counters) -> np.ndarray:
    """Vectorised :func:`uniform_at` with broadcasting over keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = mix64_array(keys + (counters + np.uint64(1)) * _NGOLDEN)
    return ((x >> _U11).astype(np.float64) + 0.5) * _INV53
