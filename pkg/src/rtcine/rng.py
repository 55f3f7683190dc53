"""Counter-based random streams.

Every draw in the package is addressed by ``(seed, stream, index)`` so
that, e.g., the jitter of beat 17 does not depend on how many cycles of
the breathing signal were drawn before it. Indexed sequences use one
generator per stream: element ``k`` of its uniform sequence is draw ``k``,
and a prefix never depends on how many values follow it.
"""
import zlib

import numpy as np


def _stream_id(name):
    return zlib.crc32(name.encode("utf-8"))


def generator(seed, stream, index=0):
    """Return a Philox generator keyed on ``(seed, stream, index)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _stream_id(stream), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def uniforms(seed, stream, n, low, high):
    """Draws ``0..n-1`` of a stream, uniform in ``[low, high)``."""
    if low == high:
        return np.full(int(n), float(low))
    return generator(seed, stream).uniform(low, high, size=int(n))
