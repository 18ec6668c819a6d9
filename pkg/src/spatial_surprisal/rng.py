"""Counter-based random streams for reproducible permutation ensembles.

Each replicate ``r`` under a master ``seed`` owns an independent SplitMix64
stream keyed by ``mix64(mix64(seed ^ SALT) + (r + 1) * GAMMA)``. The ``t``-th
draw of that stream is ``mix64(key + (t + 1) * GAMMA)``. Because a draw is a
pure function of ``(seed, r, t)``, any partition of replicates across
workers produces identical values.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x5851F42D4C957F2D)
_MASK64 = (1 << 64) - 1
_TO_UNIT = 2.0**-53


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output finaliser, elementwise on uint64 arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *path: int) -> int:
    """Hash a seed and an index path into a new 64-bit seed."""
    h = mix64(np.uint64(int(seed) & _MASK64) ^ _SALT)
    for p in path:
        with np.errstate(over="ignore"):
            h = mix64(h + np.uint64(int(p) & _MASK64) * GAMMA + GAMMA)
    return int(h)


def stream_keys(seed: int, replicates: np.ndarray) -> np.ndarray:
    base = mix64(np.uint64(int(seed) & _MASK64) ^ _SALT)
    r = np.asarray(replicates, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base + (r + np.uint64(1)) * GAMMA)


def uniforms(keys: np.ndarray, t: int) -> np.ndarray:
    """The ``t``-th double in [0, 1) of every stream in ``keys``."""
    with np.errstate(over="ignore"):
        x = mix64(keys + np.uint64(t + 1) * GAMMA)
    return (x >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def shuffle_rows(base: np.ndarray, seed: int, replicates: np.ndarray) -> np.ndarray:
    """Fisher-Yates shuffle of ``base`` once per replicate.

    Returns an array of shape ``(len(replicates), len(base))``. Row ``b`` is
    the permutation drawn from the stream of ``replicates[b]``.
    """
    replicates = np.asarray(replicates)
    n = base.size
    out = np.tile(base, (replicates.size, 1))
    if n < 2 or replicates.size == 0:
        return out
    keys = stream_keys(seed, replicates)
    rows = np.arange(replicates.size)
    for t, i in enumerate(range(n - 1, 0, -1)):
        j = (uniforms(keys, t) * (i + 1)).astype(np.int64)
        np.minimum(j, i, out=j)
        vi = out[:, i].copy()
        out[:, i] = out[rows, j]
        out[rows, j] = vi
    return out
