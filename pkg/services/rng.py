"""Counter-based random numbers with reproducible stream derivation.

Every random quantity in the package is a pure function of a 64-bit key and a
counter, so results never depend on call order or thread count.

Generator (SplitMix64 output function applied to a Weyl counter):

    mix(seed, index)      = finalize(seed + GOLDEN * (index + 1))   mod 2^64
    bits(key, c)          = finalize(key + GOLDEN * (c + 1))        mod 2^64
    uniform(key, c)       = ((bits >> 11) + 0.5) * 2^-53            in (0, 1)
    normal(key, c)        = ndtri(uniform(key, c))

    finalize(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
                 z ^= z >> 27; z *= 0x94D049BB133111EB
                 z ^= z >> 31

Streams: dataset row j of a dataset with seed s uses key mix(s, j); limit draw
s of a sampler with seed q uses key mix(q, s); replication r of a Monte Carlo
run with master seed m uses dataset seed mix(m, r).
"""

import numpy as np
from scipy.special import ndtri

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 2.0**-53


def _finalize(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output function on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def _weyl(base: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """base + GOLDEN * (counters + 1) mod 2^64, broadcasting."""
    with np.errstate(over="ignore"):
        return base + np.uint64(GOLDEN) * (counters.astype(np.uint64) + np.uint64(1))


def mix_many(seed: int, indices) -> np.ndarray:
    """Stream keys mix(seed, i) for an array of indices (uint64 array)."""
    base = np.uint64(int(seed) & MASK64)
    idx = np.asarray(indices, dtype=np.uint64)
    return _finalize(_weyl(np.full(idx.shape, base, dtype=np.uint64), idx))


def mix(seed: int, index: int) -> int:
    """64-bit stream key derived from a seed and a non-negative index."""
    return int(mix_many(seed, np.array([index], dtype=np.uint64))[0])


def uniforms(keys, count: int) -> np.ndarray:
    """Open-interval uniforms, one row per key and ``count`` columns."""
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1, 1)
    counters = np.arange(count, dtype=np.uint64).reshape(1, -1)
    bits = _finalize(_weyl(keys, counters))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53


def normals(keys, count: int) -> np.ndarray:
    """Standard normals by inverse-CDF transform, shape (len(keys), count)."""
    return ndtri(uniforms(keys, count))


def stream_normals(seed: int, rows: int, count: int, start: int = 0) -> np.ndarray:
    """Normals for stream indices start..start+rows-1 of ``seed``."""
    keys = mix_many(seed, np.arange(start, start + rows, dtype=np.uint64))
    return normals(keys, count)


def stream_uniforms(seed: int, rows: int, count: int, start: int = 0) -> np.ndarray:
    """Uniforms for stream indices start..start+rows-1 of ``seed``."""
    keys = mix_many(seed, np.arange(start, start + rows, dtype=np.uint64))
    return uniforms(keys, count)
