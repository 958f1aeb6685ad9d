"""Counter-based Philox4x32-10 random streams.

Every draw is addressed by ``(key, step, stream, path)``.  A path's random
numbers therefore never depend on how paths are split across workers or on
how many draws other functionals consumed.
"""
from __future__ import annotations

import math
import zlib

import numba as nb
import numpy as np

__all__ = [
    "philox4x32",
    "philox4x32_py",
    "uniform_pair",
    "normal_pair",
    "stream_key",
    "STREAM_NORMAL",
    "STREAM_NORMAL_EXTRA",
    "STREAM_MAX",
    "STREAM_HIT",
    "STREAM_ABSORB",
    "STREAM_AUX",
    "STREAM_LOCAL_TIME",
]

# Sub-stream ids carried in the second counter word.
STREAM_NORMAL = 0
STREAM_NORMAL_EXTRA = 1
STREAM_MAX = 2
STREAM_ABSORB = 3
STREAM_AUX = 4
STREAM_TAIL = 5
STREAM_HIT = 8
STREAM_LOCAL_TIME = 32

_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_WEYL0 = np.uint32(0x9E3779B9)
_WEYL1 = np.uint32(0xBB67AE85)
_LOW32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_TWO26 = 67108864.0
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", nogil=True, cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32 on a 4-word counter and a 2-word key."""
    for _ in range(10):
        p0 = _MUL0 * np.uint64(c0)
        p1 = _MUL1 * np.uint64(c2)
        hi0 = np.uint32(p0 >> _SHIFT32)
        lo0 = np.uint32(p0 & _LOW32)
        hi1 = np.uint32(p1 >> _SHIFT32)
        lo1 = np.uint32(p1 & _LOW32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _WEYL0)
        k1 = np.uint32(k1 + _WEYL1)
    return c0, c1, c2, c3


@nb.njit(inline="always", nogil=True, cache=True)
def uniform_pair(k0, k1, step, stream, path):
    """Two 53-bit uniforms in the open interval (0, 1)."""
    a, b, c, d = philox4x32(
        np.uint32(step & 0xFFFFFFFF),
        np.uint32(stream),
        np.uint32(path & 0xFFFFFFFF),
        np.uint32(path >> 32),
        k0,
        k1,
    )
    u1 = ((a >> 5) * _TWO26 + (b >> 6) + 0.5) * _INV53
    u2 = ((c >> 5) * _TWO26 + (d >> 6) + 0.5) * _INV53
    return u1, u2


@nb.njit(inline="always", nogil=True, cache=True)
def normal_pair(k0, k1, step, stream, path):
    """Two independent standard normals by Box-Muller."""
    u1, u2 = uniform_pair(k0, k1, step, stream, path)
    r = math.sqrt(-2.0 * math.log(u1))
    th = 2.0 * math.pi * u2
    return r * math.cos(th), r * math.sin(th)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def stream_key(seed: int, label: str = "") -> tuple[np.uint32, np.uint32]:
    """Derive a 2-word Philox key from a 64-bit seed and a text label.

    The label (a check name, say) gives each consumer its own substream so
    results do not depend on the order in which consumers run.
    """
    tag = zlib.crc32(label.encode("utf-8")) if label else 0
    mixed = _splitmix64((int(seed) & 0xFFFFFFFFFFFFFFFF) ^ (tag << 32))
    return np.uint32(mixed & 0xFFFFFFFF), np.uint32(mixed >> 32)


def philox4x32_py(counter, key):
    """Pure-Python reference of :func:`philox4x32` (for testing)."""
    c = [int(v) & 0xFFFFFFFF for v in counter]
    k = [int(v) & 0xFFFFFFFF for v in key]
    for _ in range(10):
        p0 = 0xD2511F53 * c[0]
        p1 = 0xCD9E8D57 * c[2]
        c = [
            (p1 >> 32) ^ c[1] ^ k[0],
            p1 & 0xFFFFFFFF,
            (p0 >> 32) ^ c[3] ^ k[1],
            p0 & 0xFFFFFFFF,
        ]
        k = [(k[0] + 0x9E3779B9) & 0xFFFFFFFF, (k[1] + 0xBB67AE85) & 0xFFFFFFFF]
    return tuple(c)
