"""Counter-based random number streams for the sampling schemes.

The generators here are purely functional: every variate is a deterministic
function of (key, counter), built from the splitmix64 finalizer.  This makes
multi-run experiments reproducible independently of scheduling, lets the
compiled and pure-Python chain implementations draw bit-identical noise, and
keeps per-run streams independent (one derived key per run).

All integer arithmetic is modulo 2**64.
"""

from enum import Enum

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53
SQRT3 = np.sqrt(3.0)


class NoiseKind(Enum):
    """Increment laws available to the scheme.

    All have mean 0, unit variance and vanishing third moment; ``RADEMACHER``
    and ``UNIFORM_BOUNDED`` are almost surely bounded, ``GAUSSIAN`` is not.
    """

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM_BOUNDED = "uniform_bounded"


def _mix64(z):
    # splitmix64 finalizer, vectorized over uint64 arrays
    z = np.asarray(z, dtype=np.uint64)
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


def raw_u64(key, counters):
    """Raw 64-bit output for each counter under the given stream key."""
    c = np.asarray(counters, dtype=np.uint64)
    return _mix64(np.uint64(key) + (c + np.uint64(1)) * _GOLDEN)


def stream_key(seed, stream=0):
    """Derive the stream key for one chain from a base seed and stream index."""
    with np.errstate(over="ignore"):
        k0 = _mix64(np.uint64(seed) + _GOLDEN)
        return np.uint64(raw_u64(k0, np.uint64(stream)))


def uniform01(key, counters):
    """Uniform variates on [0, 1), one per counter."""
    return (raw_u64(key, counters) >> np.uint64(11)).astype(np.float64) * _U53


def gaussian(key, counters):
    """Standard normal variates via Box-Muller; consumes two raw draws each."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniform01(key, np.uint64(2) * c)
    u2 = uniform01(key, np.uint64(2) * c + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def rademacher(key, counters):
    """+/-1 equiprobable variates."""
    bit = raw_u64(key, counters) & np.uint64(1)
    return np.where(bit == np.uint64(1), 1.0, -1.0)


def uniform_bounded(key, counters):
    """Uniform variates on [-sqrt(3), sqrt(3)] (unit variance)."""
    return SQRT3 * (2.0 * uniform01(key, counters) - 1.0)


_SAMPLERS = {
    NoiseKind.GAUSSIAN: gaussian,
    NoiseKind.RADEMACHER: rademacher,
    NoiseKind.UNIFORM_BOUNDED: uniform_bounded,
}

# integer codes shared with the compiled engine
NOISE_CODE = {
    NoiseKind.GAUSSIAN: 0,
    NoiseKind.RADEMACHER: 1,
    NoiseKind.UNIFORM_BOUNDED: 2,
}


class CounterRNG:
    """Tiny stateful wrapper advancing a counter on one noise stream."""

    def __init__(self, seed, stream=0):
        self.key = stream_key(seed, stream)
        self.counter = 0

    def draw(self, kind, dim):
        """Return ``dim`` i.i.d. variates of the given kind and advance."""
        ctrs = np.arange(self.counter, self.counter + dim, dtype=np.uint64)
        self.counter += dim
        return _SAMPLERS[kind](self.key, ctrs)


def noise_vector(kind, key, step_index, dim):
    """Noise vector for one scheme step: components j use counters step*dim + j."""
    base = np.uint64(step_index) * np.uint64(dim)
    ctrs = base + np.arange(dim, dtype=np.uint64)
    return _SAMPLERS[kind](key, ctrs)
